//! Small dense kernels: matrix exponential, Lyapunov solve, SPD inverse and
//! adaptive Gauss–Legendre quadrature.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Lower-degree Padé cores with their norm thresholds.
const PADE_LOW: [(f64, &[f64]); 4] = [
    (1.495585217958292e-2, &[120.0, 60.0, 12.0, 1.0]),
    (2.539398330063230e-1, &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0]),
    (
        9.504178996162932e-1,
        &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
    ),
    (
        2.097847961257068,
        &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
    ),
];

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_quotient(u: DMatrix<f64>, v: DMatrix<f64>) -> DMatrix<f64> {
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular for scaled arguments")
}

/// Matrix exponential by scaling and squaring with the Padé degree chosen
/// from the 1-norm (3, 5, 7, 9, or 13 with scaling).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    if n == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].exp());
    }
    let nrm = norm1(m);
    if nrm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let id = DMatrix::<f64>::identity(n, n);
    for (theta, b) in PADE_LOW {
        if nrm <= theta {
            let a2 = m * m;
            let mut pow = id.clone();
            let mut u = &id * b[1];
            let mut v = &id * b[0];
            for k in 1..b.len() / 2 {
                pow = &pow * &a2;
                u += &pow * b[2 * k + 1];
                v += &pow * b[2 * k];
            }
            return pade_quotient(m * u, v);
        }
    }
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = pade_quotient(u, v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `(e^x − 1)/x`, continuous at 0.
pub fn expm1_ratio(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// `(e^{Mh}, ∫_0^h e^{Mr} dr · c)` from one exponential of an augmented matrix.
pub fn expm_with_integral(m: &DMatrix<f64>, c: &DVector<f64>, h: f64) -> (DMatrix<f64>, DVector<f64>) {
    let d = m.nrows();
    if d == 1 {
        let x = m[(0, 0)] * h;
        return (
            DMatrix::from_element(1, 1, x.exp()),
            DVector::from_element(1, c[0] * h * expm1_ratio(x)),
        );
    }
    let mut aug = DMatrix::zeros(d + 1, d + 1);
    aug.view_mut((0, 0), (d, d)).copy_from(&(m * h));
    aug.view_mut((0, d), (d, 1)).copy_from(&(c * h));
    let e = expm(&aug);
    (
        e.view((0, 0), (d, d)).into_owned(),
        e.view((0, d), (d, 1)).column(0).into_owned(),
    )
}

/// Solve `Bλ + λB' + A = 0` for symmetric `λ`.
///
/// Fails when two eigenvalues of `B` sum to (numerically) zero.
pub fn solve_lyapunov(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = b.nrows();
    let eig = b.complex_eigenvalues();
    let scale = b.norm().max(1e-300);
    for i in 0..d {
        for j in i..d {
            let s = eig[i] + eig[j];
            if s.norm() <= 1e-10 * scale {
                return Err(Error::LyapunovSingular(
                    format!("{}", eig[i]),
                    format!("{}", eig[j]),
                ));
            }
        }
    }
    let id = DMatrix::<f64>::identity(d, d);
    let op = id.kronecker(b) + b.kronecker(&id);
    let rhs = DVector::from_iterator(d * d, a.iter().map(|x| -x));
    let sol = op.lu().solve(&rhs).ok_or_else(|| {
        Error::LyapunovSingular(format!("{}", eig[0]), format!("{}", -eig[0]))
    })?;
    let lam = DMatrix::from_vec(d, d, sol.as_slice().to_vec());
    Ok((&lam + lam.transpose()) * 0.5)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str, time: Option<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let inv = sym
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::Singular { what, time })?;
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Cholesky factor `L` with `M = LL'`, and `log det M`.
pub fn spd_factor(m: &DMatrix<f64>, what: &'static str, time: Option<f64>) -> Result<(DMatrix<f64>, f64)> {
    let sym = (m + m.transpose()) * 0.5;
    let c = sym.cholesky().ok_or(Error::Singular { what, time })?;
    let l = c.l();
    let logdet = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
    Ok((l, logdet))
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl_panel<F: Fn(f64) -> DMatrix<f64>>(f: &F, lo: f64, hi: f64, rule: &(Vec<f64>, Vec<f64>)) -> DMatrix<f64> {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc: Option<DMatrix<f64>> = None;
    for (x, w) in rule.0.iter().zip(&rule.1) {
        let v = f(mid + half * x) * (w * half);
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        });
    }
    acc.expect("rule has nodes")
}

/// Adaptive Gauss–Legendre integral of a matrix-valued function.
///
/// Per panel the rule order is raised 8 → 16 → 32 → 64; a panel that still
/// changes by more than `tol` (relative) is bisected.
pub fn integrate_matrix<F: Fn(f64) -> DMatrix<f64>>(f: &F, lo: f64, hi: f64, tol: f64) -> DMatrix<f64> {
    let rules: Vec<_> = [8, 16, 32, 64].iter().map(|&n| gauss_legendre(n)).collect();
    integrate_panel(f, lo, hi, tol, &rules, 0)
}

fn integrate_panel<F: Fn(f64) -> DMatrix<f64>>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
    rules: &[(Vec<f64>, Vec<f64>)],
    depth: usize,
) -> DMatrix<f64> {
    let mut prev = gl_panel(f, lo, hi, &rules[0]);
    for rule in &rules[1..] {
        let next = gl_panel(f, lo, hi, rule);
        let diff = (&next - &prev).norm();
        if diff <= tol * next.norm().max(1e-300) || diff == 0.0 {
            return next;
        }
        prev = next;
    }
    if depth >= 30 {
        return prev;
    }
    let mid = 0.5 * (lo + hi);
    integrate_panel(f, lo, mid, tol, rules, depth + 1) + integrate_panel(f, mid, hi, tol, rules, depth + 1)
}

/// Adaptive Gauss–Legendre integral of a vector-valued function.
pub fn integrate_vector<F: Fn(f64) -> DVector<f64> + ?Sized>(f: &F, lo: f64, hi: f64, tol: f64) -> DVector<f64> {
    let g = |t: f64| {
        let v = f(t);
        let n = v.len();
        DMatrix::from_vec(n, 1, v.as_slice().to_vec())
    };
    integrate_matrix(&g, lo, hi, tol).column(0).into_owned()
}

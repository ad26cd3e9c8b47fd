use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{one_norm, SplitOperator};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
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

const THETA: [(f64, usize); 4] =
    [(1.495585217958292e-2, 3), (2.539398330063230e-1, 5), (9.504178996162932e-1, 7), (2.097847961257068, 9)];
const THETA13: f64 = 5.371920351148152;

fn scaled(m: &DMatrix<C64>, s: f64) -> DMatrix<C64> {
    m * C64::from(s)
}

/// Low-degree Padé numerator/denominator pieces (U, V).
fn pade_low(a: &DMatrix<C64>, b: &[f64]) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut odd = DMatrix::identity(n, n) * C64::from(b[1]);
    let mut even = DMatrix::identity(n, n) * C64::from(b[0]);
    let mut power = DMatrix::identity(n, n);
    for k in (2..b.len()).step_by(2) {
        power = &power * &a2;
        even += scaled(&power, b[k]);
        if k + 1 < b.len() {
            odd += scaled(&power, b[k + 1]);
        }
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let b = &PADE13;
    let n = a.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = scaled(&a6, b[13]) + scaled(&a4, b[11]) + scaled(&a2, b[9]);
    let u = a * (&a6 * inner_u + scaled(&a6, b[7]) + scaled(&a4, b[5]) + scaled(&a2, b[3]) + scaled(&id, b[1]));
    let inner_v = scaled(&a6, b[12]) + scaled(&a4, b[10]) + scaled(&a2, b[8]);
    let v = &a6 * inner_v + scaled(&a6, b[6]) + scaled(&a4, b[4]) + scaled(&a2, b[2]) + scaled(&id, b[0]);
    (u, v)
}

/// Dense matrix exponential by scaling and squaring with Padé approximants.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    assert!(a.is_square(), "expm of non-square matrix");
    let norm = one_norm(a);
    for &(theta, degree) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(a, coeffs);
            return solve_pade(u, v);
        }
    }
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = scaled(a, 0.5f64.powi(squarings));
    let (u, v) = pade13(&a);
    let mut r = solve_pade(u, v);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn solve_pade(u: DMatrix<C64>, v: DMatrix<C64>) -> DMatrix<C64> {
    let numer = &v + &u;
    let denom = v - u;
    denom.lu().solve(&numer).expect("Padé denominator is singular")
}

/// Scratch buffers for [`expm_action`].
#[derive(Debug, Default, Clone)]
pub struct ActionWorkspace {
    term: Vec<C64>,
    next: Vec<C64>,
    vals: Vec<C64>,
}

impl ActionWorkspace {
    pub fn new(n: usize) -> Self {
        Self { term: vec![C64::default(); n], next: vec![C64::default(); n], vals: Vec::new() }
    }
}

const TAYLOR_RADIUS: f64 = 3.0;
const MAX_TERMS: usize = 60;

fn inf_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max)
}

/// Overwrites `v` with exp((L0 + eps·Leps)·t)·v.
///
/// Truncated Taylor series on `s` substeps, where `s` keeps the 1-norm of
/// each substep generator below 3. Terms are summed until two successive
/// ones fall below unit roundoff relative to the partial sum.
pub fn expm_action(op: &SplitOperator, eps: f64, t: f64, v: &mut [C64], ws: &mut ActionWorkspace) {
    let n = op.dim();
    debug_assert_eq!(v.len(), n);
    if ws.term.len() != n {
        *ws = ActionWorkspace::new(n);
    }
    op.combine(eps, &mut ws.vals);
    let norm = op.norm_of_values(&ws.vals) * t.abs();
    if norm == 0.0 {
        return;
    }
    let substeps = (norm / TAYLOR_RADIUS).ceil().max(1.0) as usize;
    let h = t / substeps as f64;
    let tol = f64::EPSILON / 2.0;

    for _ in 0..substeps {
        ws.term.copy_from_slice(v);
        let mut small = 0;
        for k in 1..=MAX_TERMS {
            op.apply_values(&ws.vals, &ws.term, &mut ws.next);
            let c = h / k as f64;
            for (tk, nk) in ws.term.iter_mut().zip(&ws.next) {
                *tk = nk * c;
            }
            for (vi, ti) in v.iter_mut().zip(&ws.term) {
                *vi += ti;
            }
            if inf_norm(&ws.term) <= tol * inf_norm(v) {
                small += 1;
                if small == 2 {
                    break;
                }
            } else {
                small = 0;
            }
        }
    }
}

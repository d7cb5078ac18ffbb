//! Matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham 2005). Used as the reference route for rate-equation
//! solutions and as the fallback when the generator is not diagonalizable.

use nalgebra::DMatrix;

const THETA_13: f64 = 5.371920351148152;

const PADE_13: [f64; 14] = [
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

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    scale_and_square(a, |_| {})
}

/// `exp(M)` for a rate generator `M` (columns summing to zero). The result
/// is column-stochastic; columns are renormalized after every squaring so
/// rounding cannot accumulate into probability drift.
pub fn expm_generator(m: &DMatrix<f64>) -> DMatrix<f64> {
    let fix = |r: &mut DMatrix<f64>| {
        for mut c in r.column_iter_mut() {
            let s = c.sum();
            c /= s;
        }
    };
    let mut r = scale_and_square(m, fix);
    fix(&mut r);
    r
}

fn scale_and_square(a: &DMatrix<f64>, mut after_square: impl FnMut(&mut DMatrix<f64>)) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm = norm1(a);
    let squarings = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    let a = a * 2f64.powi(-squarings);

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE_13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..squarings {
        r = &r * &r;
        after_square(&mut r);
    }
    r
}

use crate::error::{Error, Result};

/// Barycentric point with weight normalized to the element measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

const fn qp(a: f64, b: f64, c: f64, weight: f64) -> QuadPoint {
    QuadPoint {
        bary: [a, b, c],
        weight,
    }
}

const T: f64 = 1.0 / 3.0;
static ORDER1: [QuadPoint; 1] = [qp(T, T, T, 1.0)];

const S: f64 = 1.0 / 6.0;
const L: f64 = 2.0 / 3.0;
static ORDER2: [QuadPoint; 3] = [qp(L, S, S, T), qp(S, L, S, T), qp(S, S, L, T)];

// Strang-Fix / Dunavant six-point rule, exact for degree 4.
const A1: f64 = 0.445_948_490_915_964_9;
const B1: f64 = 1.0 - 2.0 * A1;
const W1: f64 = 0.223_381_589_678_011_47;
const A2: f64 = 0.091_576_213_509_770_74;
const B2: f64 = 1.0 - 2.0 * A2;
const W2: f64 = 0.109_951_743_655_321_87;
static ORDER4: [QuadPoint; 6] = [
    qp(B1, A1, A1, W1),
    qp(A1, B1, A1, W1),
    qp(A1, A1, B1, W1),
    qp(B2, A2, A2, W2),
    qp(A2, B2, A2, W2),
    qp(A2, A2, B2, W2),
];

/// Triangle rule exact for polynomials of total degree `order`
/// (1, 2 or 4). Weights sum to one.
pub fn quadrature_triangle(order: usize) -> Result<&'static [QuadPoint]> {
    match order {
        1 => Ok(&ORDER1),
        2 => Ok(&ORDER2),
        4 => Ok(&ORDER4),
        n => Err(Error::UnsupportedQuadrature(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for o in [1, 2, 4] {
            let q = quadrature_triangle(o).unwrap();
            let s: f64 = q.iter().map(|p| p.weight).sum();
            assert!((s - 1.0).abs() < 1e-15);
            assert!(q.iter().all(|p| p.weight > 0.0));
        }
        assert!(quadrature_triangle(3).is_err());
    }
}

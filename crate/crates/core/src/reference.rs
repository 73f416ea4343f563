//! Closed-form minimizers for data of length 2 and 3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallCaseSolution {
    /// `None` when the infimum is not attained.
    pub x: Option<Signal>,
    pub attained: bool,
    pub unique: bool,
    /// Some coordinate of the minimizer is zero.
    pub boundary: bool,
    pub gradient_at_min: Option<Vec<f64>>,
}

fn check_entry(index: usize, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidEntry { index, value })
    }
}

/// Minimizer for `y = (y_0, y_1)`.
pub fn solve_n1(y: [f64; 2]) -> Result<SmallCaseSolution> {
    let [y0, y1] = y;
    check_entry(0, y0)?;
    check_entry(1, y1)?;
    let solution = |x: Vec<f64>, unique, boundary, gradient: Vec<f64>| SmallCaseSolution {
        x: Some(Signal::from_vec_unchecked(x)),
        attained: true,
        unique,
        boundary,
        gradient_at_min: Some(gradient),
    };
    Ok(match (y0 > 0.0, y1 > 0.0) {
        // I(x) = x_0^2 + 2 x_0 x_1, minimized by x_0 = 0 and any x_1.
        (false, false) => solution(vec![0.0, 0.0], false, true, vec![0.0, 0.0]),
        // Along 2 x_0 x_1 = y_1 the divergence is x_0^2 -> 0 but x_0 = 0 is
        // infinite.
        (false, true) => SmallCaseSolution {
            x: None,
            attained: false,
            unique: false,
            boundary: false,
            gradient_at_min: None,
        },
        (true, false) => {
            let x0 = y0.sqrt();
            solution(vec![x0, 0.0], true, true, vec![0.0, 2.0 * x0])
        }
        (true, true) => {
            let x0 = y0.sqrt();
            solution(vec![x0, y1 / (2.0 * x0)], true, false, vec![0.0, 0.0])
        }
    })
}

/// Minimizer for `y = (y_0, y_1, y_2)` with `y_0 > 0`.
///
/// Interior (exact match) when `y_1^2 < 4 y_0 y_2`; otherwise the minimizer
/// has `x_2 = 0` and `grad_2 I = 2 (y_0 + y_1/2)(y_1^2/4 - y_0 y_2) /
/// ((y_2 + y_1/2)^2 sqrt(y_0 + y_1 + y_2)) >= 0`.
pub fn solve_n2(y: [f64; 3]) -> Result<SmallCaseSolution> {
    let [y0, y1, y2] = y;
    for (i, v) in y.iter().enumerate() {
        check_entry(i, *v)?;
    }
    if y0 <= 0.0 {
        return Err(Error::InvalidEntry {
            index: 0,
            value: y0,
        });
    }
    let root0 = y0.sqrt();
    let discriminant = y1 * y1 / 4.0 - y0 * y2;
    let (x, gradient, boundary) = if y1 == 0.0 && y2 == 0.0 {
        // Only y_0 to explain: x = (sqrt y_0, 0, 0), both tail derivatives 2 x_0.
        (
            vec![root0, 0.0, 0.0],
            vec![0.0, 2.0 * root0, 2.0 * root0],
            true,
        )
    } else if discriminant < 0.0 {
        let x = vec![
            root0,
            y1 / (2.0 * root0),
            -discriminant / y0 / (2.0 * root0),
        ];
        (x, vec![0.0; 3], false)
    } else {
        let root_total = (y0 + y1 + y2).sqrt();
        let lead = y0 + y1 / 2.0;
        let tail = y2 + y1 / 2.0;
        let x = vec![lead / root_total, tail / root_total, 0.0];
        let g2 = 2.0 * lead * discriminant / (tail * tail * root_total);
        (x, vec![0.0, 0.0, g2], true)
    };
    Ok(SmallCaseSolution {
        x: Some(Signal::from_vec_unchecked(x)),
        attained: true,
        unique: true,
        boundary,
        gradient_at_min: Some(gradient),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{autoconvolve_truncated, gradient, objective};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn n1_cases() {
        let sol = solve_n1([4.0, 4.0]).unwrap();
        assert_eq!(sol.x.unwrap().as_slice(), &[2.0, 1.0]);
        assert!(!sol.boundary && sol.unique && sol.attained);

        let sol = solve_n1([9.0, 0.0]).unwrap();
        assert_eq!(sol.x.as_ref().unwrap().as_slice(), &[3.0, 0.0]);
        assert!(sol.boundary);
        assert_eq!(sol.gradient_at_min.unwrap(), vec![0.0, 6.0]);
        let g = gradient(
            sol.x.as_ref().unwrap(),
            &Signal::new(vec![9.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(g, vec![0.0, 6.0]);

        let sol = solve_n1([0.0, 5.0]).unwrap();
        assert!(!sol.attained);
        assert!(sol.x.is_none());

        let sol = solve_n1([0.0, 0.0]).unwrap();
        assert!(!sol.unique);
        assert!(solve_n1([-1.0, 0.0]).is_err());
    }

    #[test]
    fn n2_cases() {
        let sol = solve_n2([1.0, 2.0, 3.0]).unwrap();
        assert_eq!(sol.x.unwrap().as_slice(), &[1.0, 1.0, 1.0]);
        assert!(!sol.boundary);

        let sol = solve_n2([1.0, 4.0, 1.0]).unwrap();
        let a = 3.0 / 6f64.sqrt();
        let x = sol.x.unwrap();
        assert_relative_eq!(x[0], a, max_relative = 1e-15);
        assert_relative_eq!(x[1], a, max_relative = 1e-15);
        assert_eq!(x[2], 0.0);
        let g = sol.gradient_at_min.unwrap();
        assert_relative_eq!(g[2], 2.0 / 6f64.sqrt(), max_relative = 1e-14);
        let direct = gradient(&x, &Signal::new(vec![1.0, 4.0, 1.0]).unwrap()).unwrap();
        assert_relative_eq!(direct[2], g[2], max_relative = 1e-14);

        // On the branch boundary both formulas give (1, 1, 0).
        let sol = solve_n2([1.0, 2.0, 1.0]).unwrap();
        assert_eq!(sol.x.unwrap().as_slice(), &[1.0, 1.0, 0.0]);
        let interior = vec![1.0, 1.0, (1.0 - 4.0 / 4.0) / 2.0];
        assert_eq!(interior, vec![1.0, 1.0, 0.0]);

        let sol = solve_n2([4.0, 0.0, 0.0]).unwrap();
        assert_eq!(sol.x.as_ref().unwrap().as_slice(), &[2.0, 0.0, 0.0]);
        let direct = gradient(
            sol.x.as_ref().unwrap(),
            &Signal::new(vec![4.0, 0.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(sol.gradient_at_min.unwrap(), direct);

        assert!(solve_n2([0.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn n2_interior_matches_exactly(y0 in 0.1f64..10.0, y1 in 0.0f64..10.0, y2 in 0.0f64..10.0) {
            let sol = solve_n2([y0, y1, y2]).unwrap();
            let x = sol.x.unwrap();
            let y = Signal::new(vec![y0, y1, y2]).unwrap();
            if !sol.boundary {
                let fit = autoconvolve_truncated(&x);
                for (a, b) in fit.iter().zip(y.iter()) {
                    prop_assert!((a - b).abs() <= 1e-12 * y0.max(*b));
                }
            } else {
                let g = gradient(&x, &y).unwrap();
                let scale = y.sum().sqrt();
                prop_assert!(g[0].abs() <= 1e-12 * scale && g[1].abs() <= 1e-12 * scale);
                prop_assert!(g[2] >= -1e-12 * scale);
                let expected = sol.gradient_at_min.unwrap()[2];
                prop_assert!((g[2] - expected).abs() <= 1e-10 * scale);
            }
            prop_assert!(objective(&x, &y).unwrap().is_finite());
        }
    }
}

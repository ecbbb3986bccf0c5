//! Three-sphere trilateration. Subtracting the BS sphere from the two RIS
//! spheres linearizes the system in (x, y); Cramer's rule gives x*, y* and the
//! BS sphere gives z* up to sign, resolved with the height the user reports.

use std::fmt;

use thiserror::Error;

use crate::channel::Position3D;

/// Negative discriminants down to this value (m²) are clamped to zero.
pub const DISCRIMINANT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocalizationError {
    #[error("anchors are collinear in the xy-plane (a1·b2 − a2·b1 = {0})")]
    DegenerateAnchors(f64),
    #[error("anchor {name} has z = {z}, expected the BS plane z = {plane}")]
    NonCoplanar { name: &'static str, z: f64, plane: f64 },
    #[error("range {name} = {value} is not a finite non-negative distance")]
    InvalidRange { name: &'static str, value: f64 },
    #[error("ranges are inconsistent: discriminant {discriminant} m² at ({x}, {y})")]
    InfeasibleRanges { discriminant: f64, x: f64, y: f64 },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("no convergence after {iterations} iterations (objective {objective})")]
    NoConvergence { iterations: usize, objective: f64 },
}

/// BS and the two RIS centres. All anchors share one z-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorSet {
    bs: Position3D,
    ris1: Position3D,
    ris2: Position3D,
}

impl AnchorSet {
    pub fn new(bs: Position3D, ris1: Position3D, ris2: Position3D) -> Result<Self, LocalizationError> {
        for p in [bs, ris1, ris2] {
            if !p.is_finite() {
                return Err(LocalizationError::NonFinite("anchor coordinate"));
            }
        }
        for (name, p) in [("ris1", ris1), ("ris2", ris2)] {
            if (p.z - bs.z).abs() > 1e-9 {
                return Err(LocalizationError::NonCoplanar {
                    name,
                    z: p.z,
                    plane: bs.z,
                });
            }
        }
        let anchors = Self { bs, ris1, ris2 };
        let det = anchors.determinant();
        let scale = (ris1 - bs).norm() * (ris2 - bs).norm();
        if !(det.abs() > 1e-12 * scale) {
            return Err(LocalizationError::DegenerateAnchors(det));
        }
        Ok(anchors)
    }

    pub fn bs(&self) -> Position3D {
        self.bs
    }

    pub fn ris1(&self) -> Position3D {
        self.ris1
    }

    pub fn ris2(&self) -> Position3D {
        self.ris2
    }

    pub fn as_array(&self) -> [Position3D; 3] {
        [self.bs, self.ris1, self.ris2]
    }

    /// Exact ranges from a point to (BS, RIS1, RIS2).
    pub fn ranges_to(&self, p: &Position3D) -> RangeTriple {
        RangeTriple {
            d1: p.distance(&self.bs),
            d2: p.distance(&self.ris1),
            d3: p.distance(&self.ris2),
        }
    }

    fn determinant(&self) -> f64 {
        let (a1, b1) = (self.ris1.x - self.bs.x, self.ris1.y - self.bs.y);
        let (a2, b2) = (self.ris2.x - self.bs.x, self.ris2.y - self.bs.y);
        a1 * b2 - a2 * b1
    }
}

/// Ranges to (BS, RIS1, RIS2) in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeTriple {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl RangeTriple {
    pub fn new(d1: f64, d2: f64, d3: f64) -> Result<Self, LocalizationError> {
        let r = Self { d1, d2, d3 };
        r.validate()?;
        Ok(r)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.d1, self.d2, self.d3]
    }

    fn validate(&self) -> Result<(), LocalizationError> {
        for (name, value) in [("d1", self.d1), ("d2", self.d2), ("d3", self.d3)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(LocalizationError::InvalidRange { name, value });
            }
        }
        Ok(())
    }
}

/// Coefficients of the linearized system `a_i·x + b_i·y + c_i·z = D_i`.
/// Row 1 is RIS1 − BS, row 2 is RIS2 − BS, row 3 is RIS2 − RIS1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSystem {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub c: [f64; 3],
    pub d: [f64; 3],
}

impl LinearSystem {
    pub fn determinant(&self) -> f64 {
        self.a[0] * self.b[1] - self.a[1] * self.b[0]
    }
}

pub fn build_linear_system(anchors: &AnchorSet, d: &RangeTriple) -> LinearSystem {
    let (bs, r1, r2) = (anchors.bs, anchors.ris1, anchors.ris2);
    let (d1s, d2s, d3s) = (d.d1 * d.d1, d.d2 * d.d2, d.d3 * d.d3);
    LinearSystem {
        a: [r1.x - bs.x, r2.x - bs.x, r2.x - r1.x],
        b: [r1.y - bs.y, r2.y - bs.y, r2.y - r1.y],
        c: [r1.z - bs.z, r2.z - bs.z, r2.z - r1.z],
        d: [
            (d1s - d2s + r1.norm_sqr() - bs.norm_sqr()) / 2.0,
            (d1s - d3s + r2.norm_sqr() - bs.norm_sqr()) / 2.0,
            (d2s - d3s + r2.norm_sqr() - r1.norm_sqr()) / 2.0,
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeightBranch {
    Upper,
    Lower,
    /// Zero discriminant: both roots coincide.
    Tangent,
}

impl fmt::Display for HeightBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeightBranch::Upper => "upper",
            HeightBranch::Lower => "lower",
            HeightBranch::Tangent => "tangent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub p_hat: Position3D,
    /// `(BS_z + √disc, BS_z − √disc)`.
    pub z_candidates: (f64, f64),
    /// Sum-of-squares objective at `p_hat`, m⁴.
    pub residual: f64,
    pub branch: HeightBranch,
    /// Set when the algebraic solution has a negative coordinate.
    pub negative_coordinates: bool,
}

/// Cramer solution for (x*, y*), then z* from the BS sphere. The root closest
/// to `reported_height` wins; an exact tie goes to the non-negative root.
pub fn solve_closed_form(
    anchors: &AnchorSet,
    d: &RangeTriple,
    reported_height: f64,
) -> Result<PositionEstimate, LocalizationError> {
    d.validate()?;
    if !reported_height.is_finite() {
        return Err(LocalizationError::NonFinite("reported height"));
    }
    let sys = build_linear_system(anchors, d);
    let det = sys.determinant();
    if det == 0.0 {
        return Err(LocalizationError::DegenerateAnchors(det));
    }
    let x = (sys.d[0] * sys.b[1] - sys.d[1] * sys.b[0]) / det;
    let y = (sys.a[0] * sys.d[1] - sys.a[1] * sys.d[0]) / det;

    let bs = anchors.bs;
    let (dx, dy) = (x - bs.x, y - bs.y);
    let mut disc = d.d1 * d.d1 - dx * dx - dy * dy;
    if disc < 0.0 {
        if disc < -DISCRIMINANT_TOLERANCE {
            return Err(LocalizationError::InfeasibleRanges { discriminant: disc, x, y });
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    let (upper, lower) = (bs.z + root, bs.z - root);
    let branch = if root == 0.0 {
        HeightBranch::Tangent
    } else {
        let du = (upper - reported_height).abs();
        let dl = (lower - reported_height).abs();
        if du < dl {
            HeightBranch::Upper
        } else if dl < du {
            HeightBranch::Lower
        } else if upper >= 0.0 {
            HeightBranch::Upper
        } else {
            HeightBranch::Lower
        }
    };
    let z = match branch {
        HeightBranch::Lower => lower,
        _ => upper,
    };
    let p_hat = Position3D::new(x, y, z);
    Ok(PositionEstimate {
        p_hat,
        z_candidates: (upper, lower),
        residual: nls_objective(&p_hat, anchors, d),
        branch,
        negative_coordinates: x < 0.0 || y < 0.0 || z < 0.0,
    })
}

/// `E(p) = Σᵢ (dᵢ² − ‖p − Pᵢ‖²)²`.
pub fn nls_objective(p: &Position3D, anchors: &AnchorSet, d: &RangeTriple) -> f64 {
    anchors
        .as_array()
        .iter()
        .zip(d.as_array())
        .map(|(a, di)| {
            let r = di * di - (*p - *a).norm_sqr();
            r * r
        })
        .sum()
}

/// Analytic gradient of [`nls_objective`]: `−4·Σᵢ rᵢ·(p − Pᵢ)`, `rᵢ = dᵢ² − ‖p − Pᵢ‖²`.
pub fn nls_gradient(p: &Position3D, anchors: &AnchorSet, d: &RangeTriple) -> Position3D {
    anchors
        .as_array()
        .iter()
        .zip(d.as_array())
        .fold(Position3D::ORIGIN, |acc, (a, di)| {
            let diff = *p - *a;
            let r = di * di - diff.norm_sqr();
            acc + diff.scale(-4.0 * r)
        })
}

/// Levenberg–Marquardt reference solver, kept as an independent check of the
/// closed form rather than as a production path.
pub mod nls {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    pub const INITIAL_DAMPING: f64 = 1e-3;
    pub const MAX_ITERATIONS: usize = 200;

    /// Minimizes the sum-of-squares objective from `initial`, projecting every
    /// iterate onto `p ≥ 0`.
    pub fn nls_solve_oracle(
        anchors: &AnchorSet,
        d: &RangeTriple,
        initial: Position3D,
    ) -> Result<Position3D, LocalizationError> {
        if !initial.is_finite() {
            return Err(LocalizationError::NonFinite("initial point"));
        }
        let targets = anchors.as_array();
        let ranges = d.as_array();
        let project = |p: Position3D| Position3D::new(p.x.max(0.0), p.y.max(0.0), p.z.max(0.0));
        let residuals = |p: &Position3D| -> [f64; 3] {
            std::array::from_fn(|i| (*p - targets[i]).norm_sqr() - ranges[i] * ranges[i])
        };
        let scale = ranges.iter().map(|r| r * r).fold(1.0, f64::max);

        let mut p = project(initial);
        let mut r = residuals(&p);
        let mut cost: f64 = r.iter().map(|v| v * v).sum();
        let mut lambda = INITIAL_DAMPING;
        for _ in 0..MAX_ITERATIONS {
            if cost <= (1e-14 * scale).powi(2) {
                return Ok(p);
            }
            let jac = Matrix3::from_fn(|i, a| {
                let diff = p - targets[i];
                2.0 * [diff.x, diff.y, diff.z][a]
            });
            let jtj = jac.transpose() * jac;
            let jtr = jac.transpose() * Vector3::from(r);
            let mut accepted = false;
            while lambda < 1e16 {
                let damping = Matrix3::from_diagonal(&jtj.diagonal().map(|v| lambda * (v + 1e-12)));
                let Some(step) = (jtj + damping).lu().solve(&-jtr) else {
                    lambda *= 10.0;
                    continue;
                };
                let cand = project(p + Position3D::new(step[0], step[1], step[2]));
                let cand_r = residuals(&cand);
                let cand_cost: f64 = cand_r.iter().map(|v| v * v).sum();
                if cand_cost < cost {
                    let moved = (cand - p).norm();
                    p = cand;
                    r = cand_r;
                    cost = cand_cost;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if moved <= 1e-15 * (1.0 + p.norm()) {
                        return Ok(p);
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                // no descent direction left: stationary at working precision
                return Ok(p);
            }
        }
        if cost <= (1e-9 * scale).powi(2) {
            Ok(p)
        } else {
            Err(LocalizationError::NoConvergence {
                iterations: MAX_ITERATIONS,
                objective: cost,
            })
        }
    }
}

pub use nls::nls_solve_oracle;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    fn table_anchors() -> AnchorSet {
        AnchorSet::new(
            Position3D::ORIGIN,
            Position3D::new(0.0, 55.0, 0.0),
            Position3D::new(55.0, 0.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn linear_system_table_example() {
        let anchors = table_anchors();
        let d = anchors.ranges_to(&Position3D::new(25.0, 25.0, 0.0));
        let sys = build_linear_system(&anchors, &d);
        assert!((sys.d[0] - 1375.0).abs() < 1e-9);
        assert!((sys.d[1] - 1375.0).abs() < 1e-9);
        assert_eq!((sys.a[0], sys.b[0], sys.a[1], sys.b[1]), (0.0, 55.0, 55.0, 0.0));
    }

    #[test]
    fn closed_form_table_examples() {
        let anchors = table_anchors();
        let truth = Position3D::new(25.0, 25.0, 0.0);
        let est = solve_closed_form(&anchors, &anchors.ranges_to(&truth), 0.0).unwrap();
        assert!(est.p_hat.distance(&truth) < 1e-9);

        let truth = Position3D::new(10.0, 20.0, 5.0);
        let d = anchors.ranges_to(&truth);
        let sys = build_linear_system(&anchors, &d);
        assert!((sys.d[0] - 1100.0).abs() < 1e-9);
        assert!((sys.d[1] - 550.0).abs() < 1e-9);
        let est = solve_closed_form(&anchors, &d, 5.0).unwrap();
        assert!((est.z_candidates.0 - 5.0).abs() < 1e-9);
        assert!((est.z_candidates.1 + 5.0).abs() < 1e-9);
        assert_eq!(est.branch, HeightBranch::Upper);
        assert!(est.p_hat.distance(&truth) < 1e-9);
        assert!(est.residual < 1e-12);
    }

    #[test]
    fn tangent_spheres_give_one_root() {
        let anchors = table_anchors();
        let truth = Position3D::new(25.0, 25.0, 0.0);
        let est = solve_closed_form(&anchors, &anchors.ranges_to(&truth), 3.0).unwrap();
        assert_eq!(est.z_candidates.0, est.z_candidates.1);
        assert_eq!(est.branch, HeightBranch::Tangent);
    }

    #[test]
    fn symmetric_ranges_give_equal_d() {
        let anchors = table_anchors();
        let d = RangeTriple::new(30.0, 40.0, 40.0).unwrap();
        let sys = build_linear_system(&anchors, &d);
        assert_eq!(sys.d[0], sys.d[1]);
    }

    #[test]
    fn degenerate_and_non_coplanar_anchors_rejected() {
        let r = AnchorSet::new(
            Position3D::ORIGIN,
            Position3D::new(10.0, 10.0, 0.0),
            Position3D::new(20.0, 20.0, 0.0),
        );
        assert!(matches!(r, Err(LocalizationError::DegenerateAnchors(_))));
        let r = AnchorSet::new(
            Position3D::ORIGIN,
            Position3D::ORIGIN,
            Position3D::new(20.0, 0.0, 0.0),
        );
        assert!(matches!(r, Err(LocalizationError::DegenerateAnchors(_))));
        let r = AnchorSet::new(
            Position3D::ORIGIN,
            Position3D::new(0.0, 55.0, 2.0),
            Position3D::new(55.0, 0.0, 0.0),
        );
        assert!(matches!(r, Err(LocalizationError::NonCoplanar { name: "ris1", .. })));
    }

    #[test]
    fn infeasible_ranges_reported() {
        let anchors = table_anchors();
        let d = RangeTriple::new(1.0, 60.0, 60.0).unwrap();
        assert!(matches!(
            solve_closed_form(&anchors, &d, 0.0),
            Err(LocalizationError::InfeasibleRanges { .. })
        ));
        assert!(RangeTriple::new(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn slightly_negative_discriminant_is_clamped() {
        let anchors = table_anchors();
        // at (25,25,0) the discriminant is exactly zero; shrinking d1 by
        // δ pushes it to about −2·d1·δ
        let mut d = anchors.ranges_to(&Position3D::new(25.0, 25.0, 0.0));
        d.d1 -= 5e-9;
        let est = solve_closed_form(&anchors, &d, 0.0).unwrap();
        assert_eq!(est.branch, HeightBranch::Tangent);
    }

    #[test]
    fn objective_examples() {
        let anchors = table_anchors();
        let truth = Position3D::new(12.0, 7.0, 3.0);
        let d = anchors.ranges_to(&truth);
        assert!(nls_objective(&truth, &anchors, &d) < 1e-20);

        // one sphere: d₁² = 4, c₁(p) = 1 → 9; the other two contribute zero
        let p = Position3D::new(1.0, 0.0, 0.0);
        let d = RangeTriple::new(2.0, p.distance(&anchors.ris1()), p.distance(&anchors.ris2())).unwrap();
        assert!((nls_objective(&p, &anchors, &d) - 9.0).abs() < 1e-9);
    }

    #[test]
    fn objective_relabel_symmetry() {
        let a = table_anchors();
        let swapped = AnchorSet::new(a.bs(), a.ris2(), a.ris1()).unwrap();
        let d = RangeTriple::new(30.0, 35.0, 45.0).unwrap();
        let ds = RangeTriple::new(30.0, 45.0, 35.0).unwrap();
        let p = Position3D::new(11.0, 13.0, 4.0);
        assert_eq!(nls_objective(&p, &a, &d), nls_objective(&p, &swapped, &ds));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let anchors = table_anchors();
        let mut rng = SeededRng::new(31, 0);
        for _ in 0..200 {
            let p = Position3D::new(rng.uniform(1.0, 50.0), rng.uniform(1.0, 50.0), rng.uniform(0.5, 30.0));
            let d = RangeTriple::new(rng.uniform(10.0, 70.0), rng.uniform(10.0, 70.0), rng.uniform(10.0, 70.0)).unwrap();
            let g = nls_gradient(&p, &anchors, &d);
            let h = 1e-4;
            let fd = |e: Position3D| {
                (nls_objective(&(p + e.scale(h)), &anchors, &d) - nls_objective(&(p - e.scale(h)), &anchors, &d))
                    / (2.0 * h)
            };
            let num = Position3D::new(
                fd(Position3D::new(1.0, 0.0, 0.0)),
                fd(Position3D::new(0.0, 1.0, 0.0)),
                fd(Position3D::new(0.0, 0.0, 1.0)),
            );
            assert!((g - num).norm() <= 1e-5 * g.norm().max(1.0), "{g} vs {num}");
        }
    }

    #[test]
    fn oracle_converges_from_truth_and_offset() {
        let anchors = table_anchors();
        let truth = Position3D::new(18.0, 22.0, 6.0);
        let d = anchors.ranges_to(&truth);
        let p = nls_solve_oracle(&anchors, &d, truth).unwrap();
        assert!(nls_objective(&p, &anchors, &d) < 1e-18);
        let p = nls_solve_oracle(&anchors, &d, truth + Position3D::new(0.6, -0.5, 0.6)).unwrap();
        assert!(p.distance(&truth) < 1e-6);
    }

    proptest! {
        #[test]
        fn closed_form_round_trip(x in 1.0f64..50.0, y in 1.0f64..50.0, z in 0.5f64..40.0) {
            let anchors = table_anchors();
            let truth = Position3D::new(x, y, z);
            let est = solve_closed_form(&anchors, &anchors.ranges_to(&truth), z).unwrap();
            prop_assert!(est.p_hat.distance(&truth) <= 1e-9, "{}", est.p_hat.distance(&truth));
        }

        #[test]
        fn height_disambiguation_is_argmin(x in 1.0f64..50.0, y in 1.0f64..50.0, z in 0.5f64..40.0, h in -60.0f64..60.0) {
            let anchors = table_anchors();
            let est = solve_closed_form(&anchors, &anchors.ranges_to(&Position3D::new(x, y, z)), h).unwrap();
            let (u, l) = est.z_candidates;
            if (u - h).abs() != (l - h).abs() {
                let best = if (u - h).abs() < (l - h).abs() { u } else { l };
                prop_assert_eq!(est.p_hat.z, best);
            }
        }

        #[test]
        fn solution_is_translation_equivariant(x in 1.0f64..50.0, y in 1.0f64..50.0, z in 1.0f64..40.0,
                                              tx in -100.0f64..100.0, ty in -100.0f64..100.0, tz in -10.0f64..10.0) {
            let base = table_anchors();
            let t = Position3D::new(tx, ty, tz);
            let moved = AnchorSet::new(base.bs() + t, base.ris1() + t, base.ris2() + t).unwrap();
            let truth = Position3D::new(x, y, z);
            let d = base.ranges_to(&truth);
            let a = solve_closed_form(&base, &d, z).unwrap().p_hat;
            let b = solve_closed_form(&moved, &d, z + tz).unwrap().p_hat;
            prop_assert!((b - t).distance(&a) < 1e-7);
        }
    }

    #[test]
    fn closed_form_agrees_with_oracle() {
        let anchors = table_anchors();
        let mut rng = SeededRng::new(32, 0);
        for _ in 0..100 {
            let truth = Position3D::new(rng.uniform(1.0, 50.0), rng.uniform(1.0, 50.0), rng.uniform(1.0, 30.0));
            let d = anchors.ranges_to(&truth);
            let start = truth + Position3D::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            let oracle = nls_solve_oracle(&anchors, &d, start).unwrap();
            let closed = solve_closed_form(&anchors, &d, oracle.z).unwrap().p_hat;
            assert!(oracle.distance(&closed) <= 1e-6, "{oracle} vs {closed}");
        }
    }

    #[test]
    fn error_grows_with_range_perturbation() {
        let anchors = table_anchors();
        let truth = Position3D::new(20.0, 20.0, 20.0);
        let d = anchors.ranges_to(&truth);
        let mut worst: f64 = 0.0;
        for delta in [0.001, 0.01, 0.05, 0.1] {
            for signs in 0..8u8 {
                let s = |bit: u8| if signs >> bit & 1 == 1 { delta } else { -delta };
                let dp = RangeTriple::new(d.d1 + s(0), d.d2 + s(1), d.d3 + s(2)).unwrap();
                let err = solve_closed_form(&anchors, &dp, truth.z).unwrap().p_hat.distance(&truth);
                worst = worst.max(err / delta);
            }
        }
        log::info!("empirical error gain at (20,20,20): {worst:.2} m per m of range error");
        assert!(worst.is_finite() && worst < 20.0);
    }
}

//! Stadium billiard: geometry, the collision map on (q, phi), SRB-measure
//! sampling, wavefront-curvature evolution and unstable cones.
//!
//! The table is two unit-radius semicircular arcs joined by two parallel
//! flat sides of length `2l`; the boundary is parametrized by arc length
//! counterclockwise starting at the right arc, so the perimeter is
//! `2 pi + 4 l` and the area `pi + 4 l`. A phase point is `(q, phi)` with
//! `phi in [-pi/2, pi/2]` measured from the inward normal toward the
//! counterclockwise tangent; the collision map preserves
//! `cos(phi) dphi dq` up to normalization.
//!
//! Curvature sign convention: `K = -1` on the (focusing) arcs and `0` on
//! the flats. With it the reflection law for beam curvature reads
//! `B+ = B- + 2K/cos(phi)` and free flight is `1/B-' = tau + 1/B+`;
//! the one-flight expansion of a wavefront in the p-metric is
//! `|1 + tau B+|`.
//!
//! Next-collision search: flats intersect by one division, foreign arcs by
//! a stable quadratic, and a chord that stays on the current arc is taken
//! in closed form (`tau = 2 cos phi`, angular advance `pi - 2 phi`), which
//! avoids the catastrophic cancellation a generic quadratic suffers for
//! near-grazing repeated arc collisions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::uniform_unit;

/// Collisions closer to tangential than this (radians from pi/2) are
/// rejected; tangential collisions are measure-zero singularities.
pub const GRAZING_CUTOFF: f64 = 1e-9;

/// Minimum accepted flight time, so the solver never re-detects the
/// current collision point.
pub const MIN_TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BilliardError {
    /// Flat half-length must be positive and finite.
    InvalidFlatLength { l: f64 },
    /// Phase point outside the chart.
    InvalidPhase { q: f64, phi: f64 },
    /// The collision would be closer than the grazing cutoff to
    /// tangential; the sample should be discarded and resampled.
    GrazingOrbit { phi: f64 },
    /// No admissible intersection found (floating-point corner case).
    SolverFailure,
}

impl std::fmt::Display for BilliardError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BilliardError::InvalidFlatLength { l } => write!(f, "invalid flat half-length {l}"),
            BilliardError::InvalidPhase { q, phi } => write!(f, "invalid phase point ({q}, {phi})"),
            BilliardError::GrazingOrbit { phi } => write!(f, "grazing collision at phi = {phi}"),
            BilliardError::SolverFailure => write!(f, "no admissible next collision found"),
        }
    }
}

impl std::error::Error for BilliardError {}

/// Boundary components in arc-length order from the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    ArcRight,
    FlatTop,
    ArcLeft,
    FlatBottom,
}

impl Component {
    pub fn is_arc(&self) -> bool {
        matches!(self, Component::ArcRight | Component::ArcLeft)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Component::ArcRight => "arc_right",
            Component::FlatTop => "flat_top",
            Component::ArcLeft => "arc_left",
            Component::FlatBottom => "flat_bottom",
        }
    }
}

/// A collision-space point: arc length `q` on the boundary and outgoing
/// angle `phi` from the inward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: f64,
    pub phi: f64,
}

impl PhasePoint {
    pub fn new(q: f64, phi: f64) -> Self {
        PhasePoint { q, phi }
    }
}

/// One free flight between consecutive collisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionStep {
    /// Free path length.
    pub tau: f64,
    pub from_component: Component,
    pub to_component: Component,
    /// Outgoing angle at the arrival point.
    pub incidence: f64,
}

/// Stadium table: unit-radius arcs, flats of half-length `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StadiumTable {
    flat_half_length: f64,
}

/// Infinitesimal wavefront data carried along an orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wavefront {
    /// Beam curvature; `post` distinguishes B+ (just after a collision)
    /// from B- (just before).
    Curvature { b: f64, post: bool },
    /// Tangent vector in the (dq, dphi) chart.
    Tangent { dq: f64, dphi: f64 },
}

impl Wavefront {
    /// Post-collision curvature of the tangent vector (dq, dphi) at a
    /// point with curvature `k` and angle `phi`:
    /// `B+ = (dphi/dq + K) / cos(phi)`.
    pub fn post_curvature_of_tangent(dq: f64, dphi: f64, k: f64, phi: f64) -> f64 {
        (dphi / dq + k) / phi.cos()
    }

    /// Slope dphi/dq of a post-collision curvature: `B+ cos(phi) - K`.
    pub fn slope_of_post_curvature(b_plus: f64, k: f64, phi: f64) -> f64 {
        b_plus * phi.cos() - k
    }
}

impl StadiumTable {
    pub fn new(flat_half_length: f64) -> Result<Self, BilliardError> {
        if !(flat_half_length.is_finite() && flat_half_length > 0.0) {
            return Err(BilliardError::InvalidFlatLength {
                l: flat_half_length,
            });
        }
        Ok(StadiumTable { flat_half_length })
    }

    pub fn flat_half_length(&self) -> f64 {
        self.flat_half_length
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * std::f64::consts::PI + 4.0 * self.flat_half_length
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI + 4.0 * self.flat_half_length
    }

    /// Longest chord: the distance between the two arc apexes.
    pub fn diameter(&self) -> f64 {
        2.0 + 2.0 * self.flat_half_length
    }

    /// Arc-length starts of (arc right, flat top, arc left, flat bottom);
    /// exact arithmetic on the four lengths pi, 2l, pi, 2l.
    pub fn breakpoints(&self) -> [f64; 4] {
        let pi = std::f64::consts::PI;
        let l2 = 2.0 * self.flat_half_length;
        [0.0, pi, pi + l2, 2.0 * pi + l2]
    }

    /// Mean free path of the billiard flow projected to collisions:
    /// `pi * area / perimeter`.
    pub fn mean_free_path(&self) -> f64 {
        std::f64::consts::PI * self.area() / self.perimeter()
    }

    pub fn wrap_q(&self, q: f64) -> f64 {
        q.rem_euclid(self.perimeter())
    }

    pub fn component_of(&self, q: f64) -> Component {
        let [_, b1, b2, b3] = self.breakpoints();
        let q = self.wrap_q(q);
        if q < b1 {
            Component::ArcRight
        } else if q < b2 {
            Component::FlatTop
        } else if q < b3 {
            Component::ArcLeft
        } else {
            Component::FlatBottom
        }
    }

    /// Signed curvature at `q`: -1 on the focusing arcs, 0 on the flats.
    pub fn curvature(&self, q: f64) -> f64 {
        if self.component_of(q).is_arc() {
            -1.0
        } else {
            0.0
        }
    }

    fn arc_center_and_start(&self, comp: Component) -> (f64, f64) {
        let half_pi = std::f64::consts::FRAC_PI_2;
        match comp {
            Component::ArcRight => (self.flat_half_length, -half_pi),
            Component::ArcLeft => (-self.flat_half_length, half_pi),
            _ => unreachable!("not an arc"),
        }
    }

    /// Arc angle of a point with parameter `q` on an arc component.
    fn arc_angle(&self, q: f64, comp: Component) -> f64 {
        let [b0, _, b2, _] = self.breakpoints();
        let (_, theta_lo) = self.arc_center_and_start(comp);
        let start = match comp {
            Component::ArcRight => b0,
            Component::ArcLeft => b2,
            _ => unreachable!(),
        };
        theta_lo + (self.wrap_q(q) - start)
    }

    fn q_of_arc_angle(&self, theta: f64, comp: Component) -> f64 {
        let [b0, _, b2, _] = self.breakpoints();
        let (_, theta_lo) = self.arc_center_and_start(comp);
        let start = match comp {
            Component::ArcRight => b0,
            Component::ArcLeft => b2,
            _ => unreachable!(),
        };
        self.wrap_q(start + (theta - theta_lo))
    }

    /// Boundary point of parameter `q`.
    pub fn position(&self, q: f64) -> (f64, f64) {
        let q = self.wrap_q(q);
        let [_, b1, _, b3] = self.breakpoints();
        let l = self.flat_half_length;
        match self.component_of(q) {
            Component::ArcRight => {
                let theta = self.arc_angle(q, Component::ArcRight);
                (l + theta.cos(), theta.sin())
            }
            Component::FlatTop => (l - (q - b1), 1.0),
            Component::ArcLeft => {
                let theta = self.arc_angle(q, Component::ArcLeft);
                (-l + theta.cos(), theta.sin())
            }
            Component::FlatBottom => (-l + (q - b3), -1.0),
        }
    }

    /// Unit inward normal at `q`.
    pub fn inward_normal(&self, q: f64) -> (f64, f64) {
        match self.component_of(q) {
            Component::ArcRight => {
                let theta = self.arc_angle(q, Component::ArcRight);
                (-theta.cos(), -theta.sin())
            }
            Component::FlatTop => (0.0, -1.0),
            Component::ArcLeft => {
                let theta = self.arc_angle(q, Component::ArcLeft);
                (-theta.cos(), -theta.sin())
            }
            Component::FlatBottom => (0.0, 1.0),
        }
    }

    /// Unit tangent in the direction of increasing `q` (counterclockwise).
    pub fn tangent(&self, q: f64) -> (f64, f64) {
        match self.component_of(q) {
            Component::ArcRight => {
                let theta = self.arc_angle(q, Component::ArcRight);
                (-theta.sin(), theta.cos())
            }
            Component::FlatTop => (-1.0, 0.0),
            Component::ArcLeft => {
                let theta = self.arc_angle(q, Component::ArcLeft);
                (-theta.sin(), theta.cos())
            }
            Component::FlatBottom => (1.0, 0.0),
        }
    }

    fn validate(&self, x: &PhasePoint) -> Result<(), BilliardError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !x.q.is_finite() || !x.phi.is_finite() || x.phi.abs() > half_pi {
            return Err(BilliardError::InvalidPhase { q: x.q, phi: x.phi });
        }
        if x.phi.abs() > half_pi - GRAZING_CUTOFF {
            return Err(BilliardError::GrazingOrbit { phi: x.phi });
        }
        Ok(())
    }

    /// Advances one collision: exact ray/segment and ray/circle
    /// intersection, then the specular reflection law.
    pub fn step(&self, x: &PhasePoint) -> Result<(PhasePoint, CollisionStep), BilliardError> {
        self.validate(x)?;
        let q = self.wrap_q(x.q);
        let from = self.component_of(q);
        let p = self.position(q);
        let n = self.inward_normal(q);
        let t = self.tangent(q);
        let (c, s) = (x.phi.cos(), x.phi.sin());
        let d = (c * n.0 + s * t.0, c * n.1 + s * t.1);

        // Best candidate: (tau, component, q-hint for same-arc hits).
        let mut best: Option<(f64, Component, Option<f64>)> = None;
        let mut consider = |tau: f64, comp: Component, q_hint: Option<f64>| {
            if tau > MIN_TAU && best.is_none_or(|(bt, _, _)| tau < bt) {
                best = Some((tau, comp, q_hint));
            }
        };

        // Chord staying on the current arc, in closed form.
        if from.is_arc() {
            let theta = self.arc_angle(q, from);
            let (_, theta_lo) = self.arc_center_and_start(from);
            let advance =
                (std::f64::consts::PI - 2.0 * x.phi).rem_euclid(2.0 * std::f64::consts::PI);
            let theta_new = theta + advance;
            let offset = (theta_new - theta_lo).rem_euclid(2.0 * std::f64::consts::PI);
            if offset <= std::f64::consts::PI {
                let tau = 2.0 * x.phi.cos();
                consider(
                    tau,
                    from,
                    Some(self.q_of_arc_angle(theta_lo + offset, from)),
                );
            }
        }

        // Flats (excluding the one we stand on).
        let l = self.flat_half_length;
        for (comp, y_wall) in [(Component::FlatTop, 1.0), (Component::FlatBottom, -1.0)] {
            if comp == from {
                continue;
            }
            if d.1.abs() < 1e-300 {
                continue;
            }
            let tau = (y_wall - p.1) / d.1;
            if tau <= MIN_TAU {
                continue;
            }
            let x_hit = p.0 + tau * d.0;
            if x_hit.abs() <= l + 1e-9 {
                consider(tau, comp, None);
            }
        }

        // Foreign arc by a stable quadratic.
        for comp in [Component::ArcRight, Component::ArcLeft] {
            if comp == from {
                continue;
            }
            let (cx, theta_lo) = self.arc_center_and_start(comp);
            let rel = (p.0 - cx, p.1);
            let b = d.0 * rel.0 + d.1 * rel.1;
            let cc = rel.0 * rel.0 + rel.1 * rel.1 - 1.0;
            let disc = b * b - cc;
            if disc <= 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            let (r1, r2) = if b >= 0.0 {
                let t1 = -b - sq;
                (t1, cc / t1)
            } else {
                let t2 = -b + sq;
                (cc / t2, t2)
            };
            for tau in [r1.min(r2), r1.max(r2)] {
                if tau <= MIN_TAU {
                    continue;
                }
                let hx = p.0 + tau * d.0 - cx;
                let hy = p.1 + tau * d.1;
                let theta = hy.atan2(hx);
                let offset = (theta - theta_lo).rem_euclid(2.0 * std::f64::consts::PI);
                if offset <= std::f64::consts::PI + 1e-12 {
                    consider(
                        tau,
                        comp,
                        Some(
                            self.q_of_arc_angle(theta_lo + offset.min(std::f64::consts::PI), comp),
                        ),
                    );
                    break;
                }
            }
        }

        let (tau, to, q_hint) = best.ok_or(BilliardError::SolverFailure)?;
        if tau > self.diameter() + 1e-9 {
            return Err(BilliardError::SolverFailure);
        }
        let hit = (p.0 + tau * d.0, p.1 + tau * d.1);
        let q_new = match q_hint {
            Some(qh) => qh,
            None => {
                // Flat arrival: parameter from the x coordinate.
                let [_, b1, _, b3] = self.breakpoints();
                let x_clamped = hit.0.clamp(-l, l);
                match to {
                    Component::FlatTop => b1 + (l - x_clamped),
                    Component::FlatBottom => b3 + (x_clamped + l),
                    _ => unreachable!(),
                }
            }
        };
        let n1 = self.inward_normal(q_new);
        let t1 = self.tangent(q_new);
        let dn = d.0 * n1.0 + d.1 * n1.1;
        let refl = (d.0 - 2.0 * dn * n1.0, d.1 - 2.0 * dn * n1.1);
        let cos_phi1 = refl.0 * n1.0 + refl.1 * n1.1;
        let sin_phi1 = refl.0 * t1.0 + refl.1 * t1.1;
        if cos_phi1 <= 0.0 {
            return Err(BilliardError::SolverFailure);
        }
        let phi1 = sin_phi1.atan2(cos_phi1);
        if phi1.abs() > std::f64::consts::FRAC_PI_2 - GRAZING_CUTOFF {
            return Err(BilliardError::GrazingOrbit { phi: phi1 });
        }
        Ok((
            PhasePoint::new(q_new, phi1),
            CollisionStep {
                tau,
                from_component: from,
                to_component: to,
                incidence: phi1,
            },
        ))
    }

    /// A point distributed according to the invariant collision measure
    /// `cos(phi) dphi dq`: `q` uniform and `sin(phi)` uniform on [-1, 1].
    pub fn sample_srb(&self, rng: &mut ChaCha8Rng) -> PhasePoint {
        let q = self.perimeter() * uniform_unit(rng);
        loop {
            let u = 2.0 * uniform_unit(rng) - 1.0;
            let phi = u.asin();
            if phi.abs() <= std::f64::consts::FRAC_PI_2 - GRAZING_CUTOFF {
                return PhasePoint::new(q, phi);
            }
        }
    }

    /// Derivative of the collision map in the (dq, dphi) chart over the
    /// flight `from -> to`:
    ///
    /// ```text
    ///          -1   [ tau K0 + cos f0                          tau             ]
    /// Df = ---------[                                                          ]
    ///      cos f1   [ tau K0 K1 + K0 cos f1 + K1 cos f0        tau K1 + cos f1 ]
    /// ```
    pub fn derivative_matrix(&self, from: &PhasePoint, to: &PhasePoint, tau: f64) -> [[f64; 2]; 2] {
        let k0 = self.curvature(from.q);
        let k1 = self.curvature(to.q);
        let c0 = from.phi.cos();
        let c1 = to.phi.cos();
        [
            [-(tau * k0 + c0) / c1, -tau / c1],
            [
                -(tau * k0 * k1 + k0 * c1 + k1 * c0) / c1,
                -(tau * k1 + c1) / c1,
            ],
        ]
    }

    /// Unstable-cone membership of the tangent vector (dq, dphi) at `q`:
    /// slope in [K, +inf] on flats, in [K, 0] on the focusing arcs, with a
    /// slope tolerance `tol` at the cone boundaries.
    pub fn in_unstable_cone(&self, q: f64, dq: f64, dphi: f64, tol: f64) -> bool {
        let k = self.curvature(q);
        if dq == 0.0 {
            // Projective slope infinity: inside the flat cone only.
            return k == 0.0;
        }
        let slope = dphi / dq;
        if k == 0.0 {
            slope >= -tol
        } else {
            slope >= k - tol && slope <= tol
        }
    }
}

/// Beam curvature as a projective pair, so passage through infinity at
/// conjugate points is exact rather than a special case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectiveCurvature {
    num: f64,
    den: f64,
}

impl ProjectiveCurvature {
    pub fn new(b: f64) -> Self {
        if b.is_infinite() {
            ProjectiveCurvature {
                num: b.signum(),
                den: 0.0,
            }
        } else {
            ProjectiveCurvature { num: b, den: 1.0 }
        }
    }

    pub fn infinite() -> Self {
        ProjectiveCurvature { num: 1.0, den: 0.0 }
    }

    /// Current value; +-inf at a conjugate point.
    pub fn value(&self) -> f64 {
        self.num / self.den
    }

    /// Free flight of length `tau`: `1/B' = tau + 1/B`.
    pub fn free_flight(&mut self, tau: f64) {
        self.den += tau * self.num;
        self.rescale();
    }

    /// Reflection at a wall of curvature `k` hit with angle `phi`:
    /// `B+ = B- + 2k/cos(phi)`.
    pub fn reflect(&mut self, k: f64, phi: f64) {
        self.num += 2.0 * k / phi.cos() * self.den;
        self.rescale();
    }

    /// Expansion of the wavefront over a flight of length `tau` in the
    /// p-metric: `|1 + tau B|`.
    pub fn expansion_over(&self, tau: f64) -> f64 {
        ((self.den + tau * self.num) / self.den).abs()
    }

    fn rescale(&mut self) {
        let m = self.num.abs().max(self.den.abs());
        if m > 1e150 {
            self.num /= m;
            self.den /= m;
        }
    }
}

/// Post-collision curvature after one free flight of length `tau` and
/// reflection at a wall with curvature `arrival_k` hit at angle
/// `arrival_phi`. Conjugate points pass through infinity exactly.
pub fn propagate_curvature(b_plus: f64, tau: f64, arrival_k: f64, arrival_phi: f64) -> f64 {
    let mut pc = ProjectiveCurvature::new(b_plus);
    pc.free_flight(tau);
    pc.reflect(arrival_k, arrival_phi);
    pc.value()
}

/// Wavefront expansion factor over one flight: `|1 + tau B+|`.
pub fn expansion_factor(b_plus: f64, tau: f64) -> f64 {
    (1.0 + tau * b_plus).abs()
}

/// Riemannian length of the tangent vector (dq, dphi) at angle `phi`:
/// `(|dx|_p / cos phi) sqrt(1 + (dphi/dq)^2)` with `|dx|_p = cos phi |dq|`.
pub fn riemannian_norm(dq: f64, dphi: f64, phi: f64) -> Result<f64, BilliardError> {
    if phi.cos() <= GRAZING_CUTOFF {
        return Err(BilliardError::GrazingOrbit { phi });
    }
    if dq == 0.0 {
        return Ok(dphi.abs());
    }
    let p_norm = phi.cos() * dq.abs();
    Ok(p_norm / phi.cos() * (1.0 + (dphi / dq) * (dphi / dq)).sqrt())
}

/// Membership in the reference set X: the collision is on an arc and is
/// the first of its series (no previous collision, or the previous one was
/// on a flat or on the other arc).
pub fn in_reference_x(
    table: &StadiumTable,
    current: &PhasePoint,
    previous: Option<&PhasePoint>,
) -> bool {
    let cur = table.component_of(current.q);
    if !cur.is_arc() {
        return false;
    }
    match previous {
        None => true,
        Some(prev) => table.component_of(prev.q) != cur,
    }
}

/// A long billiard orbit with automatic handling of the measure-zero
/// singular events: a grazing or solver-failed step discards the sample,
/// logs it, and restarts from a fresh SRB point.
#[derive(Debug, Clone)]
pub struct BilliardStream {
    table: StadiumTable,
    current: PhasePoint,
    rng: ChaCha8Rng,
    pub grazing_discards: u64,
    pub solver_discards: u64,
}

impl BilliardStream {
    pub fn new(table: StadiumTable, rng: &mut ChaCha8Rng) -> Self {
        use rand::RngCore;
        let mut own = ChaCha8Rng::seed_from_u64(rng.next_u64());
        let current = table.sample_srb(&mut own);
        BilliardStream {
            table,
            current,
            rng: own,
            grazing_discards: 0,
            solver_discards: 0,
        }
    }

    pub fn from_point(table: StadiumTable, start: PhasePoint, rng: &mut ChaCha8Rng) -> Self {
        use rand::RngCore;
        let own = ChaCha8Rng::seed_from_u64(rng.next_u64());
        BilliardStream {
            table,
            current: start,
            rng: own,
            grazing_discards: 0,
            solver_discards: 0,
        }
    }

    pub fn current(&self) -> PhasePoint {
        self.current
    }

    pub fn table(&self) -> &StadiumTable {
        &self.table
    }

    /// Next collision; never fails (singular samples are discarded and the
    /// orbit restarted, with the discard counted).
    pub fn next_collision(&mut self) -> (PhasePoint, CollisionStep) {
        loop {
            match self.table.step(&self.current) {
                Ok((next, step)) => {
                    self.current = next;
                    return (next, step);
                }
                Err(BilliardError::GrazingOrbit { .. }) => {
                    self.grazing_discards += 1;
                    self.current = self.table.sample_srb(&mut self.rng);
                }
                Err(_) => {
                    self.solver_discards += 1;
                    self.current = self.table.sample_srb(&mut self.rng);
                }
            }
        }
    }
}

/// Item yielded by [`XReturnStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XReturnItem {
    Time(u64),
    Censored,
}

/// Successive first-return times to the reference set X along one orbit
/// (collision counts between consecutive first-arc-collision events).
#[derive(Debug)]
pub struct XReturnStream {
    inner: BilliardStream,
    prev_component: Component,
    cap: u64,
}

impl XReturnStream {
    /// Advances the orbit to its first X entry (capped), then yields
    /// returns.
    pub fn new(mut inner: BilliardStream, cap: u64) -> Option<Self> {
        let mut prev = inner.table.component_of(inner.current().q);
        for _ in 0..cap {
            let (point, _) = inner.next_collision();
            let comp = inner.table.component_of(point.q);
            let entered = comp.is_arc() && comp != prev;
            if entered {
                return Some(XReturnStream {
                    inner,
                    prev_component: comp,
                    cap,
                });
            }
            prev = comp;
        }
        None
    }

    pub fn next_return(&mut self) -> XReturnItem {
        for k in 1..=self.cap {
            let (point, _) = self.inner.next_collision();
            let comp = self.inner.table.component_of(point.q);
            let entered = comp.is_arc() && comp != self.prev_component;
            self.prev_component = comp;
            if entered {
                return XReturnItem::Time(k);
            }
        }
        XReturnItem::Censored
    }

    pub fn discards(&self) -> u64 {
        self.inner.grazing_discards + self.inner.solver_discards
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    fn unit_stadium() -> StadiumTable {
        StadiumTable::new(1.0).unwrap()
    }

    #[test]
    fn derived_constants() {
        let t = unit_stadium();
        assert_relative_eq!(
            t.perimeter(),
            2.0 * std::f64::consts::PI + 4.0,
            epsilon = 0.0
        );
        assert_relative_eq!(t.area(), std::f64::consts::PI + 4.0, epsilon = 0.0);
        assert_relative_eq!(t.diameter(), 4.0, epsilon = 0.0);
        let [b0, b1, b2, b3] = t.breakpoints();
        assert_eq!(b0, 0.0);
        assert_relative_eq!(b1, std::f64::consts::PI, epsilon = 0.0);
        assert_relative_eq!(b2, std::f64::consts::PI + 2.0, epsilon = 0.0);
        assert_relative_eq!(b3, 2.0 * std::f64::consts::PI + 2.0, epsilon = 0.0);
        assert!(StadiumTable::new(0.0).is_err());
        assert!(StadiumTable::new(-1.0).is_err());
    }

    #[test]
    fn boundary_is_closed_and_continuous() {
        let t = unit_stadium();
        let per = t.perimeter();
        for i in 0..4 {
            let b = t.breakpoints()[i];
            let before = t.position(t.wrap_q(b - 1e-9));
            let after = t.position(t.wrap_q(b + 1e-9));
            let gap = ((before.0 - after.0).powi(2) + (before.1 - after.1).powi(2)).sqrt();
            assert!(gap < 1e-8, "gap {gap} at breakpoint {i}");
        }
        let start = t.position(0.0);
        let end = t.position(per - 1e-9);
        assert!((start.0 - end.0).abs() < 1e-8 && (start.1 - end.1).abs() < 1e-8);
    }

    #[test]
    fn flat_midpoint_normal_bounce() {
        let t = unit_stadium();
        let [_, b1, _, b3] = t.breakpoints();
        let q_bottom_mid = b3 + 1.0;
        let (next, step) = t.step(&PhasePoint::new(q_bottom_mid, 0.0)).unwrap();
        assert_relative_eq!(step.tau, 2.0, epsilon = 1e-12);
        assert_relative_eq!(next.phi, 0.0, epsilon = 1e-12);
        let q_top_mid = b1 + 1.0;
        assert_relative_eq!(next.q, q_top_mid, epsilon = 1e-9);
        assert_eq!(step.to_component, Component::FlatTop);
    }

    #[test]
    fn arc_apex_diameter_orbit() {
        // From the right apex straight through both apexes: tau = 2 + 2l.
        let t = unit_stadium();
        let apex_right = std::f64::consts::FRAC_PI_2;
        let (next, step) = t.step(&PhasePoint::new(apex_right, 0.0)).unwrap();
        assert_relative_eq!(step.tau, 4.0, epsilon = 1e-12);
        assert_relative_eq!(next.phi, 0.0, epsilon = 1e-9);
        let apex_left = std::f64::consts::PI + 2.0 + std::f64::consts::FRAC_PI_2;
        assert_relative_eq!(next.q, apex_left, epsilon = 1e-9);
        assert_eq!(step.to_component, Component::ArcLeft);
    }

    #[test]
    fn same_arc_chord_closed_form() {
        // Chord on the unit circle: tau = 2 cos(phi), incidence preserved.
        let t = unit_stadium();
        let x = PhasePoint::new(0.3, 0.2);
        let (next, step) = t.step(&x).unwrap();
        assert_eq!(step.to_component, Component::ArcRight);
        assert_relative_eq!(step.tau, 2.0 * 0.2f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(next.phi, 0.2, epsilon = 1e-12);
        assert_relative_eq!(next.q, 0.3 + std::f64::consts::PI - 0.4, epsilon = 1e-12);
    }

    #[test]
    fn reversibility_on_random_samples() {
        let t = unit_stadium();
        let mut rng = stream_rng(31, "rev", 0);
        let mut checked = 0;
        while checked < 10_000 {
            let x = t.sample_srb(&mut rng);
            let Ok((y, _)) = t.step(&x) else { continue };
            let back = PhasePoint::new(y.q, -y.phi);
            let Ok((z, _)) = t.step(&back) else { continue };
            let dq = (z.q - x.q).abs().min(t.perimeter() - (z.q - x.q).abs());
            let dphi = (z.phi - (-x.phi)).abs();
            assert!(dq < 1e-9, "q mismatch {dq} from ({}, {})", x.q, x.phi);
            assert!(dphi < 1e-9, "phi mismatch {dphi}");
            checked += 1;
        }
    }

    #[test]
    fn tau_within_diameter() {
        let t = unit_stadium();
        let mut rng = stream_rng(32, "tau", 0);
        for _ in 0..20_000 {
            let x = t.sample_srb(&mut rng);
            if let Ok((_, step)) = t.step(&x) {
                assert!(step.tau > 0.0 && step.tau <= t.diameter() + 1e-9);
            }
        }
    }

    #[test]
    fn derivative_matrix_matches_finite_differences() {
        let t = unit_stadium();
        let mut rng = stream_rng(33, "jac", 0);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 300 {
            let x = t.sample_srb(&mut rng);
            let Ok((y, step)) = t.step(&x) else { continue };
            // Skip configurations too close to a component change under
            // the probe, where one-sided derivatives differ.
            let probe = |dq: f64, dphi: f64| -> Option<(f64, f64)> {
                let (y2, s2) = t.step(&PhasePoint::new(x.q + dq, x.phi + dphi)).ok()?;
                if s2.to_component != step.to_component {
                    return None;
                }
                let mut dq_out = y2.q - y.q;
                let per = t.perimeter();
                if dq_out > per / 2.0 {
                    dq_out -= per;
                } else if dq_out < -per / 2.0 {
                    dq_out += per;
                }
                Some((dq_out, y2.phi - y.phi))
            };
            let (Some((qp, pp)), Some((qm, pm))) = (probe(h, 0.0), probe(-h, 0.0)) else {
                continue;
            };
            let (Some((qp2, pp2)), Some((qm2, pm2))) = (probe(0.0, h), probe(0.0, -h)) else {
                continue;
            };
            let fd = [
                [(qp - qm) / (2.0 * h), (qp2 - qm2) / (2.0 * h)],
                [(pp - pm) / (2.0 * h), (pp2 - pm2) / (2.0 * h)],
            ];
            let an = t.derivative_matrix(&x, &y, step.tau);
            let scale = an.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (fd[i][j] - an[i][j]).abs() < 2e-4 * scale,
                        "entry ({i},{j}): fd {} vs analytic {} at ({}, {})",
                        fd[i][j],
                        an[i][j],
                        x.q,
                        x.phi
                    );
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn srb_marginals_are_correct() {
        let t = unit_stadium();
        let mut rng = stream_rng(34, "srb", 0);
        let samples: Vec<PhasePoint> = (0..100_000).map(|_| t.sample_srb(&mut rng)).collect();
        let qs: Vec<f64> = samples.iter().map(|x| x.q).collect();
        let sins: Vec<f64> = samples.iter().map(|x| x.phi.sin()).collect();
        assert!(crate::stats::ks_uniform(&qs, 0.0, t.perimeter()) < 0.01);
        assert!(crate::stats::ks_uniform(&sins, -1.0, 1.0) < 0.01);
    }

    #[test]
    fn one_step_preserves_srb_measure() {
        let t = unit_stadium();
        let mut rng = stream_rng(35, "inv", 0);
        let mut qs = Vec::with_capacity(100_000);
        let mut sins = Vec::with_capacity(100_000);
        while qs.len() < 100_000 {
            let x = t.sample_srb(&mut rng);
            if let Ok((y, _)) = t.step(&x) {
                qs.push(y.q);
                sins.push(y.phi.sin());
            }
        }
        assert!(crate::stats::ks_uniform(&qs, 0.0, t.perimeter()) < 0.015);
        assert!(crate::stats::ks_uniform(&sins, -1.0, 1.0) < 0.015);
    }

    #[test]
    fn mean_free_path_matches_geometry() {
        let t = unit_stadium();
        let mut rng = stream_rng(36, "mfp", 0);
        let mut total = 0.0;
        let mut count = 0u64;
        while count < 100_000 {
            let x = t.sample_srb(&mut rng);
            if let Ok((_, step)) = t.step(&x) {
                total += step.tau;
                count += 1;
            }
        }
        let mean = total / count as f64;
        let expected = t.mean_free_path();
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "mean tau {mean} vs {expected}"
        );
    }

    #[test]
    fn unstable_cone_is_invariant() {
        let t = unit_stadium();
        let mut rng = stream_rng(37, "cone", 0);
        let mut checked = 0;
        while checked < 10_000 {
            let x = t.sample_srb(&mut rng);
            let Ok((y, step)) = t.step(&x) else { continue };
            // Random vector strictly inside the unstable cone at x.
            let u = uniform_unit(&mut rng);
            let (dq, dphi) = if t.curvature(x.q) == 0.0 {
                let slope = (u * std::f64::consts::FRAC_PI_2 * 0.999).tan();
                (1.0, slope)
            } else {
                (1.0, -u)
            };
            let m = t.derivative_matrix(&x, &y, step.tau);
            let dq1 = m[0][0] * dq + m[0][1] * dphi;
            let dphi1 = m[1][0] * dq + m[1][1] * dphi;
            assert!(
                t.in_unstable_cone(y.q, dq1, dphi1, 1e-12),
                "cone left at ({}, {}) -> ({}, {}), slope {}",
                x.q,
                x.phi,
                y.q,
                y.phi,
                dphi1 / dq1
            );
            checked += 1;
        }
    }

    #[test]
    fn curvature_propagation_flat_and_arc() {
        // Flat arrival only applies the free flight; arc arrival adds the
        // focusing jump -2/cos(phi').
        let b0 = -3.0;
        let tau = 0.7;
        let free = 1.0 / (tau + 1.0 / b0);
        assert_relative_eq!(
            propagate_curvature(b0, tau, 0.0, 0.3),
            free,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            propagate_curvature(b0, tau, -1.0, 0.3),
            free - 2.0 / 0.3f64.cos(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn repeated_flat_flights_accumulate_path() {
        // After i flat reflections: B+ = 1 / (sum tau_j + 1/B0).
        let b0 = 2.0;
        let taus = [0.5, 1.25, 0.75, 2.0];
        let mut b = b0;
        let mut acc = 1.0 / b0;
        for tau in taus {
            b = propagate_curvature(b, tau, 0.0, 0.1);
            acc += tau;
            assert_relative_eq!(b, 1.0 / acc, epsilon = 1e-12);
        }
    }

    #[test]
    fn conjugate_point_passes_through_infinity() {
        // tau + 1/B+ = 0 exactly: the beam focuses during the flight.
        let b = propagate_curvature(-2.0, 0.5, 0.0, 0.0);
        assert!(b.is_infinite());
        // Continuing from infinity stays finite again.
        let b2 = propagate_curvature(b, 0.25, 0.0, 0.0);
        assert_relative_eq!(b2, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn arc_series_expansion_at_least_one() {
        // Along consecutive collisions on one arc the expansion factor
        // |1 + tau B+| never drops below 1.
        for phi in [0.1, 0.4, 1.0, 1.4] {
            let cosphi = f64::cos(phi);
            let tau = 2.0 * cosphi;
            let mut b = -2.0 / cosphi;
            for i in 0..50 {
                let e = expansion_factor(b, tau);
                assert!(e >= 1.0 - 1e-12, "i={i} phi={phi}: expansion {e}");
                b = propagate_curvature(b, tau, -1.0, phi);
                // Stays inside the focusing window of the arc series.
                assert!(b <= -1.0 / cosphi + 1e-9 && b >= -2.0 / cosphi - 1e-9);
            }
        }
    }

    #[test]
    fn expansion_factor_trivia() {
        assert_eq!(expansion_factor(3.0, 0.0), 1.0);
        assert_eq!(expansion_factor(0.0, 5.0), 1.0);
    }

    #[test]
    fn riemannian_norm_examples() {
        assert_relative_eq!(riemannian_norm(1.0, 0.0, 0.0).unwrap(), 1.0, epsilon = 0.0);
        assert_relative_eq!(
            riemannian_norm(1.0, 1.0, std::f64::consts::FRAC_PI_3).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-12
        );
        let a = riemannian_norm(0.4, -0.3, 0.7).unwrap();
        let b = riemannian_norm(0.8, -0.6, 0.7).unwrap();
        assert_relative_eq!(2.0 * a, b, epsilon = 1e-12);
        assert!(riemannian_norm(1.0, 1.0, std::f64::consts::FRAC_PI_2).is_err());
    }

    #[test]
    fn reference_set_membership_rules() {
        let t = unit_stadium();
        let on_right_arc = PhasePoint::new(0.5, 0.0);
        let on_left_arc = PhasePoint::new(std::f64::consts::PI + 2.5, 0.0);
        let on_flat = PhasePoint::new(std::f64::consts::PI + 1.0, 0.0);
        assert!(in_reference_x(&t, &on_right_arc, None));
        assert!(in_reference_x(&t, &on_right_arc, Some(&on_flat)));
        assert!(in_reference_x(&t, &on_right_arc, Some(&on_left_arc)));
        let same_arc_prev = PhasePoint::new(0.9, 0.1);
        assert!(!in_reference_x(&t, &on_right_arc, Some(&same_arc_prev)));
        assert!(!in_reference_x(&t, &on_flat, None));
    }

    #[test]
    fn x_returns_have_finite_mean_and_heavy_tail() {
        let t = unit_stadium();
        let mut rng = stream_rng(38, "xret", 0);
        let stream = BilliardStream::new(t, &mut rng);
        let mut xs = XReturnStream::new(stream, 1_000_000).unwrap();
        let n = 20_000;
        let mut times = Vec::with_capacity(n);
        for _ in 0..n {
            match xs.next_return() {
                XReturnItem::Time(k) => times.push(k),
                XReturnItem::Censored => {}
            }
        }
        let mean = times.iter().sum::<u64>() as f64 / times.len() as f64;
        assert!(mean.is_finite() && mean >= 1.0);
        // Empirical survival over a dyadic grid decays with a strictly
        // negative log-log slope.
        let grid = [1u64, 2, 4, 8, 16, 32, 64];
        let counts: Vec<u64> = grid
            .iter()
            .map(|&g| times.iter().filter(|&&r| r > g).count() as u64)
            .collect();
        let curve = crate::curves::TailCurve::from_counts(&grid, &counts, times.len() as u64, 0);
        let fit = crate::curves::fit_exponent(&curve.fit_points(), (1.0, 64.0)).unwrap();
        assert!(fit.slope < -0.1, "slope {}", fit.slope);
    }

    #[test]
    fn wavefront_slope_curvature_conversion_round_trips() {
        // v = B+ cos(phi) - K links the tangent chart to beam curvature;
        // on an arc (K = -1) the cone slopes [-1, 0] are exactly the
        // post-collision curvatures [-2/cos, -1/cos].
        let phi = 0.4f64;
        for slope in [-1.0, -0.5, 0.0] {
            let b = Wavefront::post_curvature_of_tangent(1.0, slope, -1.0, phi);
            assert!(b >= -2.0 / phi.cos() - 1e-12 && b <= -1.0 / phi.cos() + 1e-12);
            assert_relative_eq!(
                Wavefront::slope_of_post_curvature(b, -1.0, phi),
                slope,
                epsilon = 1e-12
            );
        }
        // Flat wavefront on a flat wall: slope 0 <-> curvature 0.
        assert_relative_eq!(
            Wavefront::post_curvature_of_tangent(2.0, 0.0, 0.0, 0.3),
            0.0,
            epsilon = 0.0
        );
    }

    #[test]
    fn stream_is_deterministic_per_seed() {
        let t = unit_stadium();
        let run = || {
            let mut rng = stream_rng(39, "bstream", 0);
            let mut s = BilliardStream::new(t, &mut rng);
            (0..50)
                .map(|_| {
                    let (p, step) = s.next_collision();
                    (p.q, p.phi, step.tau)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}

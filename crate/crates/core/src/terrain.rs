//! Domain types for the granular slope: the heightfield substrate, robot and
//! obstacle poses, the six excavation actions and scenario definitions.
//!
//! Coordinates are in centimetres. The origin is the downhill-left corner of
//! the tank, `+x` runs laterally and `+y` points uphill. A heading `phi = 0`
//! faces uphill and positive `phi` turns counter-clockwise, so the heading
//! vector is `(-sin phi, cos phi)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Smallest grid edge accepted by [`Heightfield`].
pub const MIN_GRID: usize = 8;

/// Largest tank inclination the rig supports.
pub const MAX_SLOPE_DEG: f64 = 35.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("position ({x:.3}, {y:.3}) is outside the {width:.3} x {height:.3} cm field")]
    OutOfBounds { x: f64, y: f64, width: f64, height: f64 },
}

pub type Result<T> = std::result::Result<T, TerrainError>;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(phi: f64) -> Result<f64> {
    if !phi.is_finite() {
        return Err(TerrainError::Domain(format!("non-finite angle {phi}")));
    }
    Ok(wrap_angle(phi))
}

/// Infallible variant of [`normalize_angle`] for values already known finite.
pub(crate) fn wrap_angle(phi: f64) -> f64 {
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Axis-aligned extent of the field in centimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub width: f64,
    pub height: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0 && x <= self.width && y <= self.height
    }

    fn check(&self, x: f64, y: f64) -> Result<()> {
        if self.contains(x, y) {
            Ok(())
        } else {
            Err(TerrainError::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Clamps a point into the field. Returns the clamped point and whether it moved.
    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64, bool) {
        let cx = x.clamp(0.0, self.width);
        let cy = y.clamp(0.0, self.height);
        (cx, cy, cx != x || cy != y)
    }
}

/// Surface heights of the granular bed, stored relative to the inclined
/// reference plane of the tank. Row `j` holds cells whose centres sit at
/// `y = (j + 0.5) * cell_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    width: usize,
    height: usize,
    cell_size: f64,
    slope_angle: f64,
    heights: Vec<f64>,
}

impl Heightfield {
    pub fn new(width: usize, height: usize, cell_size: f64, slope_angle: f64, heights: Vec<f64>) -> Result<Self> {
        if width < MIN_GRID || height < MIN_GRID {
            return Err(TerrainError::Config(format!(
                "grid {width}x{height} is smaller than {MIN_GRID}x{MIN_GRID}"
            )));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(TerrainError::Config(format!("cell size {cell_size} must be > 0")));
        }
        if !slope_angle.is_finite() {
            return Err(TerrainError::Config("slope angle must be finite".into()));
        }
        if heights.len() != width * height {
            return Err(TerrainError::Config(format!(
                "expected {} heights, got {}",
                width * height,
                heights.len()
            )));
        }
        if let Some(bad) = heights.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
            return Err(TerrainError::Domain(format!("invalid height {bad}")));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            slope_angle,
            heights,
        })
    }

    /// Uniform bed of `depth` cm over the given grid.
    pub fn uniform(width: usize, height: usize, cell_size: f64, slope_angle: f64, depth: f64) -> Result<Self> {
        Self::new(width, height, cell_size, slope_angle, vec![depth; width * height])
    }

    pub fn width_cells(&self) -> usize {
        self.width
    }

    pub fn height_cells(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn slope_angle(&self) -> f64 {
        self.slope_angle
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Mutable access for the simulator. Callers must keep heights finite and non-negative.
    pub(crate) fn heights_mut(&mut self) -> &mut [f64] {
        &mut self.heights
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            width: self.width as f64 * self.cell_size,
            height: self.height as f64 * self.cell_size,
        }
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.heights[self.index(col, row)]
    }

    /// Centre of cell `(col, row)` in cm.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        ((col as f64 + 0.5) * self.cell_size, (row as f64 + 0.5) * self.cell_size)
    }

    /// Total bed volume in cm³.
    pub fn volume(&self) -> f64 {
        self.heights.iter().sum::<f64>() * self.cell_size * self.cell_size
    }
}

/// Flat bed on a tank inclined at `slope_angle` radians.
pub fn make_inclined_field(
    width_cells: usize,
    height_cells: usize,
    cell_size: f64,
    slope_angle: f64,
) -> Result<Heightfield> {
    if !(0.0..=MAX_SLOPE_DEG.to_radians() + 1e-12).contains(&slope_angle) {
        return Err(TerrainError::Config(format!(
            "slope angle {:.3} deg outside [0, {MAX_SLOPE_DEG}]",
            slope_angle.to_degrees()
        )));
    }
    Heightfield::uniform(width_cells, height_cells, cell_size, slope_angle, 0.0)
}

/// Largest absolute height difference to a 4-neighbour, divided by the cell size.
pub fn local_slope(hf: &Heightfield, col: usize, row: usize) -> Result<f64> {
    if col >= hf.width || row >= hf.height {
        return Err(TerrainError::Domain(format!(
            "cell ({col}, {row}) outside {}x{} grid",
            hf.width, hf.height
        )));
    }
    let h = hf.get(col, row);
    let mut best = 0.0f64;
    let mut visit = |c: usize, r: usize| {
        best = best.max((h - hf.get(c, r)).abs());
    };
    if col > 0 {
        visit(col - 1, row);
    }
    if col + 1 < hf.width {
        visit(col + 1, row);
    }
    if row > 0 {
        visit(col, row - 1);
    }
    if row + 1 < hf.height {
        visit(col, row + 1);
    }
    Ok(best / hf.cell_size)
}

/// Planar robot pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl RobotState {
    /// Builds a pose with `phi` wrapped into `(-pi, pi]`, without a bounds check.
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
        }
    }

    /// Builds a pose and rejects positions outside `bounds`.
    pub fn try_new(x: f64, y: f64, phi: f64, bounds: &Bounds) -> Result<Self> {
        let phi = normalize_angle(phi)?;
        bounds.check(x, y)?;
        Ok(Self { x, y, phi })
    }

    /// Unit vector the robot faces.
    pub fn heading(&self) -> (f64, f64) {
        (-self.phi.sin(), self.phi.cos())
    }

    /// Maps a body-frame offset (`u` to the robot's right, `v` forward) to world coordinates.
    pub fn body_to_world(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        (self.x + u * c - v * s, self.y + u * s + v * c)
    }

    /// Inverse of [`RobotState::body_to_world`].
    pub fn world_to_body(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        let dx = x - self.x;
        let dy = y - self.y;
        (dx * c + dy * s, -dx * s + dy * c)
    }
}

pub const DEFAULT_OBSTACLE_RADIUS: f64 = 2.0;
pub const DEFAULT_OBSTACLE_HEIGHT: f64 = 2.0;

/// Rigid disc resting on the bed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
}

impl Obstacle {
    pub fn try_new(id: u32, x: f64, y: f64, radius: f64, height: f64, bounds: &Bounds) -> Result<Self> {
        if !(radius > 0.0 && height > 0.0) {
            return Err(TerrainError::Domain(format!(
                "obstacle radius {radius} and height {height} must be > 0"
            )));
        }
        bounds.check(x, y)?;
        Ok(Self {
            id,
            x,
            y,
            radius,
            height,
        })
    }

    /// Obstacle with the default radius and height.
    pub fn standard(id: u32, x: f64, y: f64) -> Self {
        Self {
            id,
            x,
            y,
            radius: DEFAULT_OBSTACLE_RADIUS,
            height: DEFAULT_OBSTACLE_HEIGHT,
        }
    }
}

/// One of the robot's four legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leg {
    LeftFront,
    RightFront,
    LeftHind,
    RightHind,
}

impl Leg {
    /// `(lateral, forward)` sign of the leg hub in the body frame.
    pub fn body_sign(self) -> (f64, f64) {
        match self {
            Leg::LeftFront => (-1.0, 1.0),
            Leg::RightFront => (1.0, 1.0),
            Leg::LeftHind => (-1.0, -1.0),
            Leg::RightHind => (1.0, -1.0),
        }
    }
}

/// Multi-leg excavation pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// Left front leg.
    Lfe,
    /// Right front leg.
    Rfe,
    /// Left front and left hind.
    Lp,
    /// Right front and right hind.
    Rp,
    /// Both front legs.
    Fp,
    /// All four legs.
    Af,
}

impl Action {
    /// All actions in tie-break order.
    pub const ALL: [Action; 6] = [Action::Lfe, Action::Rfe, Action::Lp, Action::Rp, Action::Fp, Action::Af];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            Action::Lfe => "LFE",
            Action::Rfe => "RFE",
            Action::Lp => "LP",
            Action::Rp => "RP",
            Action::Fp => "FP",
            Action::Af => "AF",
        }
    }

    pub fn legs(self) -> &'static [Leg] {
        use Leg::*;
        match self {
            Action::Lfe => &[LeftFront],
            Action::Rfe => &[RightFront],
            Action::Lp => &[LeftFront, LeftHind],
            Action::Rp => &[RightFront, RightHind],
            Action::Fp => &[LeftFront, RightFront],
            Action::Af => &[LeftFront, RightFront, LeftHind, RightHind],
        }
    }

    /// Left/right mirror image of the action.
    pub fn mirrored(self) -> Action {
        match self {
            Action::Lfe => Action::Rfe,
            Action::Rfe => Action::Lfe,
            Action::Lp => Action::Rp,
            Action::Rp => Action::Lp,
            a => a,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Action {
    type Err = TerrainError;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| TerrainError::Domain(format!("unknown action '{s}'")))
    }
}

/// Body and leg dimensions in cm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotGeometry {
    /// Lateral distance between left and right leg hubs.
    pub leg_track: f64,
    /// Fore-aft distance between front and hind leg hubs.
    pub wheel_base: f64,
    pub leg_diameter: f64,
    pub leg_width: f64,
    /// Length of the sand region one leg sweeps per rotation.
    pub sweep_length: f64,
    /// Height of the body top above the bed.
    pub body_height: f64,
    pub body_length: f64,
    pub body_width: f64,
    /// Extra height of the front marker above the body top.
    pub marker_height: f64,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        Self {
            leg_track: 15.0,
            wheel_base: 15.0,
            leg_diameter: 6.0,
            leg_width: 1.5,
            sweep_length: 12.0,
            body_height: 4.0,
            body_length: 20.0,
            body_width: 10.0,
            marker_height: 1.0,
        }
    }
}

impl RobotGeometry {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.leg_track,
            self.wheel_base,
            self.leg_diameter,
            self.leg_width,
            self.sweep_length,
            self.body_height,
            self.body_length,
            self.body_width,
            self.marker_height,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(TerrainError::Config("robot geometry lengths must be > 0".into()))
        }
    }

    /// Body-frame position of a leg hub.
    pub fn leg_hub(&self, leg: Leg) -> (f64, f64) {
        let (su, sv) = leg.body_sign();
        (su * self.leg_track / 2.0, sv * self.wheel_base / 2.0)
    }
}

/// Task family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Manipulation,
    Locomotion,
    LocoManipulation,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Manipulation => "manipulation",
            Mode::Locomotion => "locomotion",
            Mode::LocoManipulation => "loco-manipulation",
        }
    }

    pub fn needs_obstacle_targets(self) -> bool {
        matches!(self, Mode::Manipulation | Mode::LocoManipulation)
    }

    pub fn needs_robot_target(self) -> bool {
        matches!(self, Mode::Locomotion | Mode::LocoManipulation)
    }
}

impl FromStr for Mode {
    type Err = TerrainError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "manipulation" => Ok(Mode::Manipulation),
            "locomotion" => Ok(Mode::Locomotion),
            "loco-manipulation" | "locomanipulation" => Ok(Mode::LocoManipulation),
            other => Err(TerrainError::Domain(format!("unknown mode '{other}'"))),
        }
    }
}

/// Goal for one manipulated obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal {
    Point {
        x: f64,
        y: f64,
    },
    /// Reached once the obstacle lies on or below the line `y = y_line`.
    Below {
        y_line: f64,
    },
}

impl Goal {
    /// Distance left to the goal; zero once reached for half-plane goals.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Goal::Point { x: gx, y: gy } => (x - gx).hypot(y - gy),
            Goal::Below { y_line } => (y - y_line).max(0.0),
        }
    }
}

pub const MAX_OBSTACLES: usize = 5;

/// Task definition. Obstacle `i` is paired with `obstacle_targets[i]`; obstacles
/// beyond the target list are unmanaged distractors.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub heightfield: Heightfield,
    pub robot_start: RobotState,
    pub obstacles: Vec<Obstacle>,
    pub obstacle_targets: Vec<Goal>,
    pub robot_target: Option<(f64, f64)>,
    pub success_radius: f64,
    pub max_steps: usize,
    pub rng_seed: u64,
}

impl Scenario {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bounds = self.heightfield.bounds();
        if self.obstacles.len() > MAX_OBSTACLES {
            return Err(TerrainError::Config(format!(
                "{} obstacles exceed the limit of {MAX_OBSTACLES}",
                self.obstacles.len()
            )));
        }
        if self.mode.needs_obstacle_targets() && self.obstacle_targets.is_empty() {
            return Err(TerrainError::Config(format!(
                "{} scenario needs at least one obstacle target",
                self.mode.tag()
            )));
        }
        if self.mode.needs_robot_target() && self.robot_target.is_none() {
            return Err(TerrainError::Config(format!(
                "{} scenario needs a robot target",
                self.mode.tag()
            )));
        }
        if self.obstacle_targets.len() > self.obstacles.len() {
            return Err(TerrainError::Config(format!(
                "{} targets for {} obstacles",
                self.obstacle_targets.len(),
                self.obstacles.len()
            )));
        }
        if !(self.success_radius > 0.0) || self.max_steps == 0 {
            return Err(TerrainError::Config(
                "success radius and max steps must be positive".into(),
            ));
        }
        RobotState::try_new(self.robot_start.x, self.robot_start.y, self.robot_start.phi, &bounds)?;
        for o in &self.obstacles {
            Obstacle::try_new(o.id, o.x, o.y, o.radius, o.height, &bounds)?;
        }
        Ok(())
    }

    /// The obstacles that carry a target.
    pub fn manipulated(&self) -> &[Obstacle] {
        &self.obstacles[..self.obstacle_targets.len()]
    }
}

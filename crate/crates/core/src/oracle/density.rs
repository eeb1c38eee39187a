use crate::error::{MeamError, Result};

/// Density tabulated on a uniform 1D grid, normalized with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Vec<f64>,
    mass: Vec<f64>,
    h: f64,
}

/// `G` evenly spaced points covering `[-1, 1]`.
pub fn action_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(MeamError::Usage(format!("a grid needs at least 2 points, got {points}")));
    }
    let h = 2.0 / (points - 1) as f64;
    Ok((0..points).map(|i| -1.0 + i as f64 * h).collect())
}

pub(crate) fn trapezoid_weights(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if i == 0 || i + 1 == n { 0.5 } else { 1.0 })
}

/// `sum_i w_i f_i h` with trapezoid weights.
pub(crate) fn integrate(values: &[f64], h: f64) -> f64 {
    values.iter().zip(trapezoid_weights(values.len())).map(|(v, w)| v * w).sum::<f64>() * h
}

impl GridDensity {
    /// Normalizes non-negative values on a uniform grid.
    pub fn from_unnormalized(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(MeamError::Usage(format!(
                "grid has {} points but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        let h = grid[1] - grid[0];
        if !(h > 0.0) || grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
            return Err(MeamError::Usage("grid must be uniform and ascending".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MeamError::Domain("density values must be finite and non-negative".into()));
        }
        let z = integrate(&values, h);
        if !(z > 0.0) {
            return Err(MeamError::Domain("degenerate density: zero total mass".into()));
        }
        let mass = values.into_iter().map(|v| v / z).collect();
        Ok(Self { grid, mass, h })
    }

    /// Normalizes `exp(log_values)` without overflow.
    pub fn from_log(grid: Vec<f64>, log_values: &[f64]) -> Result<Self> {
        let m = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(MeamError::Domain("degenerate density: no finite log-mass".into()));
        }
        Self::from_unnormalized(grid, log_values.iter().map(|l| (l - m).exp()).collect())
    }

    pub fn uniform(points: usize) -> Result<Self> {
        let grid = action_grid(points)?;
        Self::from_unnormalized(grid, vec![1.0; points])
    }

    /// Evaluates `f` on `[-1, 1]` and normalizes.
    pub fn from_fn(points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = action_grid(points)?;
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::from_unnormalized(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Trapezoid integral of the density (1 up to rounding).
    pub fn total(&self) -> f64 {
        integrate(&self.mass, self.h)
    }

    /// `log max(p, floor)` per grid point.
    pub fn log_mass(&self, floor: f64) -> Vec<f64> {
        self.mass.iter().map(|&p| p.max(floor).ln()).collect()
    }

    /// Probability of the grid cells selected by `mask`.
    pub fn mass_on(&self, mask: &[bool]) -> f64 {
        let sel: Vec<f64> = self.mass.iter().zip(mask).map(|(&p, &m)| if m { p } else { 0.0 }).collect();
        integrate(&sel, self.h)
    }

    pub(crate) fn same_grid(&self, other: &GridDensity) -> bool {
        self.grid.len() == other.grid.len() && self.grid.iter().zip(&other.grid).all(|(a, b)| (a - b).abs() < 1e-12)
    }
}

/// `1/2 * integral |p - q|`.
pub fn tv_distance(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    if !p.same_grid(q) {
        return Err(MeamError::Usage("tv_distance needs densities on the same grid".into()));
    }
    let diff: Vec<f64> = p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).collect();
    Ok((0.5 * integrate(&diff, p.h)).min(1.0))
}

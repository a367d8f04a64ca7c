//! Jump kernels a(z), periodic modulations μ(x,y), moments, the symbol Â and the
//! pointwise periodized kernel ã(ξ,z).

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIM};
use crate::quadrature::{bessel_j, gamma_half, sphere_area, GaussLegendre};

/// Truncation of the Gaussian family in units of σ.
pub const GAUSSIAN_TRUNCATION: f64 = 8.0;
/// Truncation of the exponential family in units of 1/λ (tail mass below 1e-14 for d ≤ 3).
pub const EXPONENTIAL_TRUNCATION: f64 = 40.0;

/// Radial profile given on a strictly increasing grid of radii, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::InvalidKernel("table needs at least two (radius, value) rows of equal length".into()));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKernel("table radii must be nonnegative and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidKernel("table values must be finite and nonnegative".into()));
        }
        Ok(Self { radii, values })
    }

    /// Parse a two-column CSV `radius,value` with a header row.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidKernel(format!("table row {}: {e}", line + 2)))?;
            if record.len() != 2 {
                return Err(Error::InvalidKernel(format!(
                    "table row {} has {} columns, expected 2",
                    line + 2,
                    record.len()
                )));
            }
            let parse =
                |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidKernel(format!("table row {}: {e}", line + 2)));
            radii.push(parse(&record[0])?);
            values.push(parse(&record[1])?);
        }
        Self::new(radii, values)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file =
            std::fs::File::open(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_csv_reader(file)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last_radius(&self) -> f64 {
        *self.radii.last().expect("table is non-empty")
    }

    /// Linear interpolation; constant below the first radius, `None` past the last.
    fn interpolate(&self, rho: f64) -> Option<f64> {
        if rho <= self.radii[0] {
            return Some(self.values[0]);
        }
        if rho > self.last_radius() {
            return None;
        }
        let k = self.radii.partition_point(|&r| r < rho);
        let (r0, r1) = (self.radii[k - 1], self.radii[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        Some(v0 + (v1 - v0) * (rho - r0) / (r1 - r0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian { sigma: f64 },
    Box { radius: f64 },
    Exponential { rate: f64 },
    Tabulated { table: RadialTable },
}

/// A radial jump kernel a(z) = amplitude·φ(|z|), cut off at the truncation radius.
/// `normalization` is the total mass ‖a‖_{L₁}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSpec {
    dim: usize,
    family: KernelFamily,
    normalization: f64,
    truncation_radius: f64,
    #[serde(skip)]
    amplitude: f64,
}

impl KernelSpec {
    pub fn gaussian(dim: usize, sigma: f64, normalization: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        let amplitude = normalization * (2.0 * PI * sigma * sigma).powf(-(dim as f64) / 2.0);
        Self::build(dim, KernelFamily::Gaussian { sigma }, normalization, GAUSSIAN_TRUNCATION * sigma, amplitude)
    }

    pub fn box_kernel(dim: usize, radius: f64, normalization: f64) -> Result<Self> {
        check_positive("radius", radius)?;
        let volume = sphere_area(dim) * radius.powi(dim as i32) / dim as f64;
        Self::build(dim, KernelFamily::Box { radius }, normalization, radius, normalization / volume)
    }

    pub fn exponential(dim: usize, rate: f64, normalization: f64) -> Result<Self> {
        check_positive("rate", rate)?;
        // ∫ e^{−λ|z|} dz = |S^{d−1}| Γ(d) / λᵈ
        let mass = sphere_area(dim) * factorial(dim - 1) / rate.powi(dim as i32);
        Self::build(
            dim,
            KernelFamily::Exponential { rate },
            normalization,
            EXPONENTIAL_TRUNCATION / rate,
            normalization / mass,
        )
    }

    /// Tabulated radial profile scaled to total mass `normalization` (midpoint rule).
    /// The truncation radius defaults to the last tabulated radius.
    pub fn tabulated(
        dim: usize,
        table: RadialTable,
        normalization: f64,
        truncation_radius: Option<f64>,
    ) -> Result<Self> {
        let radius = truncation_radius.unwrap_or(table.last_radius());
        check_positive("truncation radius", radius)?;
        let shape_mass = midpoint_radial_integral(dim, &table, radius, 0);
        if !(shape_mass.is_finite() && shape_mass > 0.0) {
            return Err(Error::InvalidKernel("tabulated kernel has zero mass".into()));
        }
        Self::build(dim, KernelFamily::Tabulated { table }, normalization, radius, normalization / shape_mass)
    }

    fn build(
        dim: usize,
        family: KernelFamily,
        normalization: f64,
        truncation_radius: f64,
        amplitude: f64,
    ) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidKernel(format!("dimension {dim} not in 1..=3")));
        }
        check_positive("normalization", normalization)?;
        Ok(Self { dim, family, normalization, truncation_radius, amplitude })
    }

    /// Override the truncation radius.
    pub fn with_truncation_radius(mut self, radius: f64) -> Result<Self> {
        check_positive("truncation radius", radius)?;
        if let KernelFamily::Tabulated { table } = &self.family {
            let shape_mass = midpoint_radial_integral(self.dim, table, radius, 0);
            self.amplitude = self.normalization / shape_mass;
        }
        self.truncation_radius = radius;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// Total mass ‖a‖_{L₁}.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    /// a at distance `rho` from the origin.
    pub fn profile(&self, rho: f64) -> Result<f64> {
        if rho > self.truncation_radius {
            return Ok(0.0);
        }
        let shape = match &self.family {
            KernelFamily::Gaussian { sigma } => (-0.5 * (rho / sigma).powi(2)).exp(),
            KernelFamily::Box { radius } => {
                if rho <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::Exponential { rate } => (-rate * rho).exp(),
            KernelFamily::Tabulated { table } => {
                table.interpolate(rho).ok_or(Error::TableGap { radius: rho, table_end: table.last_radius() })?
            }
        };
        Ok(self.amplitude * shape)
    }

    /// Radii where the profile or its derivative jumps (quadrature split points).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = match &self.family {
            KernelFamily::Gaussian { .. } => vec![],
            KernelFamily::Box { radius } => vec![*radius],
            KernelFamily::Exponential { .. } => vec![0.0],
            KernelFamily::Tabulated { table } => table.radii.clone(),
        };
        b.push(self.truncation_radius);
        b.retain(|r| *r <= self.truncation_radius);
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("{name} must be a positive finite number (got {value})")))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// |S^{d−1}| Σ ρ_mid^{k+d−1} φ(ρ_mid) Δρ over the table intervals below `radius`.
fn midpoint_radial_integral(dim: usize, table: &RadialTable, radius: f64, k: usize) -> f64 {
    let mut knots: Vec<f64> =
        std::iter::once(0.0).chain(table.radii.iter().copied().filter(|r| *r > 0.0 && *r < radius)).collect();
    knots.push(radius.min(table.last_radius()));
    let sum: f64 = knots
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let value = table.interpolate(mid).unwrap_or(0.0);
            mid.powi((k + dim - 1) as i32) * value * (w[1] - w[0])
        })
        .sum();
    sphere_area(dim) * sum
}

/// a(z); exactly zero beyond the truncation radius.
pub fn eval_kernel(spec: &KernelSpec, z: &[f64]) -> Result<f64> {
    if z.len() != spec.dim {
        return Err(Error::DimensionMismatch(format!(
            "point has {} components, kernel dimension is {}",
            z.len(),
            spec.dim
        )));
    }
    spec.profile(norm(z))
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// M_k(a) = ∫ |z|^k a(z) dz for k ≤ 4.
pub fn moment(spec: &KernelSpec, k: usize) -> Result<f64> {
    if k > 4 {
        return Err(Error::MomentOrder(k));
    }
    let d = spec.dim;
    let m0 = spec.normalization;
    let value = match &spec.family {
        KernelFamily::Gaussian { sigma } => {
            m0 * sigma.powi(k as i32) * 2f64.powf(k as f64 / 2.0) * gamma_half((d + k) as u32) / gamma_half(d as u32)
        }
        KernelFamily::Box { radius } => m0 * d as f64 * radius.powi(k as i32) / (d + k) as f64,
        KernelFamily::Exponential { rate } => m0 * factorial(d + k - 1) / (factorial(d - 1) * rate.powi(k as i32)),
        KernelFamily::Tabulated { table } => {
            spec.amplitude * midpoint_radial_integral(d, table, spec.truncation_radius, k)
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteMoment { order: k })
    }
}

/// 𝓜(a): smallest eigenvalue of ∫ z zᵀ a(z) dz. For radial kernels this is M₂/d.
pub fn second_moment_min(spec: &KernelSpec) -> Result<f64> {
    Ok(moment(spec, 2)? / spec.dim as f64)
}

/// Â(y) = ∫ (1 − cos⟨z,y⟩) a(z) dz, closed form where available.
pub fn symbol_ahat(spec: &KernelSpec, y: &[f64]) -> Result<f64> {
    let s = norm(y);
    let m0 = spec.normalization;
    let d = spec.dim;
    Ok(match &spec.family {
        KernelFamily::Gaussian { sigma } => -m0 * (-0.5 * (sigma * s).powi(2)).exp_m1(),
        KernelFamily::Box { radius } => m0 * (1.0 - ball_transform(d, radius * s)),
        KernelFamily::Exponential { rate } => {
            let ratio = rate * rate / (rate * rate + s * s);
            m0 * (1.0 - ratio.powf((d as f64 + 1.0) / 2.0))
        }
        KernelFamily::Tabulated { .. } => symbol_ahat_quadrature(spec, y)?,
    })
}

/// Normalized Fourier transform of the indicator of the unit ball at radius u.
fn ball_transform(d: usize, u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        return 1.0 - u2 / (2.0 * (d as f64 + 2.0)) + u2 * u2 / (8.0 * (d as f64 + 2.0) * (d as f64 + 4.0));
    }
    match d {
        1 => u.sin() / u,
        2 => 2.0 * bessel_j(1, u) / u,
        _ => 3.0 * (u.sin() - u * u.cos()) / u.powi(3),
    }
}

/// 1 − (angular average of cos⟨z,y⟩ over |z| = ρ) at u = ρ|y|.
fn one_minus_angular_cos(d: usize, u: f64) -> f64 {
    match d {
        1 => 2.0 * (0.5 * u).sin().powi(2),
        2 => 1.0 - bessel_j(0, u),
        _ => {
            if u.abs() < 1e-3 {
                u * u / 6.0 - u.powi(4) / 120.0
            } else {
                1.0 - u.sin() / u
            }
        }
    }
}

/// Â(y) by radial quadrature of the truncated kernel (independent of the closed forms).
pub fn symbol_ahat_quadrature(spec: &KernelSpec, y: &[f64]) -> Result<f64> {
    let s = norm(y);
    let d = spec.dim;
    let gl = GaussLegendre::new(8);
    let radius = spec.truncation_radius;
    let max_panel = (1.0 / (s + 1.0)).min(radius / 256.0);
    let mut knots = vec![0.0];
    knots.extend(spec.breakpoints().into_iter().filter(|r| *r > 0.0 && *r < radius));
    knots.push(radius);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let panels = ((w[1] - w[0]) / max_panel).ceil().max(1.0) as usize;
        let width = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let a = w[0] + p as f64 * width;
            for (rho, weight) in gl.on(a, a + width) {
                let value = spec.profile(rho)?;
                total += weight * value * rho.powi(d as i32 - 1) * one_minus_angular_cos(d, rho * s);
            }
        }
    }
    Ok(sphere_area(d) * total)
}

/// 𝒞_r(a) = min over |y| ≥ r of Â(y). All families are radial, so the search is
/// over the radius |y| only.
pub fn symbol_min_outside(spec: &KernelSpec, r: f64) -> Result<f64> {
    check_positive("radius", r)?;
    let m0 = spec.normalization;
    let radial = |s: f64| symbol_ahat(spec, &[s]);
    match &spec.family {
        // Â increases with |y| for these families.
        KernelFamily::Gaussian { .. } | KernelFamily::Exponential { .. } => radial(r),
        KernelFamily::Box { radius } => {
            let d = spec.dim;
            // Envelope of |ball_transform(u)| for the Riemann–Lebesgue tail.
            let envelope = |u: f64| match d {
                1 => 1.0 / u,
                2 => 2.0 * 0.7858 * u.powf(-4.0 / 3.0),
                _ => 3.0 * (1.0 + u) / u.powi(3),
            };
            let step = PI / (16.0 * radius);
            let mut hi = 4.0 * r.max(2.0 * PI / radius);
            loop {
                let best = scan_minimum(&radial, r, hi, step)?;
                if m0 * (1.0 - envelope(radius * hi)) >= best {
                    return Ok(best);
                }
                hi *= 2.0;
            }
        }
        KernelFamily::Tabulated { .. } => {
            let step = PI / (16.0 * spec.truncation_radius);
            let hi = (8.0 * r).max(200.0 / spec.truncation_radius);
            scan_minimum(&radial, r, hi, step)
        }
    }
}

/// Minimum of `f` on [lo, hi]: uniform scan followed by golden-section refinement.
pub fn scan_minimum(f: &impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, step: f64) -> Result<f64> {
    let count = ((hi - lo) / step).ceil().max(1.0) as usize;
    let mut best = (lo, f(lo)?);
    let mut values = Vec::with_capacity(count + 1);
    for k in 0..=count {
        let s = lo + (hi - lo) * k as f64 / count as f64;
        let v = f(s)?;
        values.push((s, v));
        if v < best.1 {
            best = (s, v);
        }
    }
    let width = (hi - lo) / count as f64;
    let (mut a, mut b) = ((best.0 - width).max(lo), (best.0 + width).min(hi));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if f(c)? < f(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = f(0.5 * (a + b))?;
    Ok(best.1.min(refined))
}

/// Pointwise lattice sum of the kernel on the difference grid.
#[derive(Debug, Clone)]
pub struct PeriodizedKernel {
    pub xi: Vec<f64>,
    /// ã(ξ, z_r) indexed by grid residue r.
    pub values: Vec<Complex64>,
    pub lattice_radius: usize,
    /// Upper bound for the kernel mass outside the summed shells (Markov bound M₁/distance).
    pub tail_bound: f64,
}

/// Smallest lattice radius covering R + diam(Ω).
pub fn default_lattice_radius(spec: &KernelSpec) -> usize {
    (spec.truncation_radius + (spec.dim as f64).sqrt()).ceil() as usize
}

/// ã(ξ,z) = Σ_{|n|_∞ ≤ radius} a(z+n) e^{−i⟨ξ,z+n⟩} at every difference-grid node z.
pub fn periodize(spec: &KernelSpec, xi: &[f64], grid: &Grid, radius: usize) -> Result<PeriodizedKernel> {
    let d = spec.dim;
    if grid.dim() != d || xi.len() != d {
        return Err(Error::DimensionMismatch("periodize: kernel, grid and ξ dimensions differ".into()));
    }
    let shells = 2 * radius + 1;
    let shell_count = shells.pow(d as u32);
    let mut values = Vec::with_capacity(grid.len());
    for r in 0..grid.len() {
        let z = grid.node(r);
        let mut acc = Complex64::new(0.0, 0.0);
        for s in 0..shell_count {
            let mut rest = s;
            let mut t = [0.0; MAX_DIM];
            for axis in 0..d {
                let n = (rest % shells) as f64 - radius as f64;
                rest /= shells;
                t[axis] = z[axis] + n;
            }
            let value = spec.profile(norm(&t[..d]))?;
            if value != 0.0 {
                let phase: f64 = (0..d).map(|i| xi[i] * t[i]).sum();
                acc += value * Complex64::from_polar(1.0, -phase);
            }
        }
        values.push(acc);
    }
    // Shells cover every t with |t|_∞ ≤ radius.
    let covered = radius as f64;
    let tail_bound =
        if spec.truncation_radius <= covered { 0.0 } else { moment(spec, 1)? / covered.max(f64::MIN_POSITIVE) };
    Ok(PeriodizedKernel { xi: xi.to_vec(), values, lattice_radius: radius, tail_bound })
}

/// Family of the periodic modulation μ.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MuFamily {
    Constant {
        value: f64,
    },
    /// base·(1 + α·Π_i cos(2πx_i)cos(2πy_i)).
    CosineProduct {
        base: f64,
        alpha: f64,
    },
    /// Values on an M-per-dimension grid of Ω×Ω (row-major M^d × M^d), piecewise constant.
    Tabulated {
        points: usize,
        values: Vec<f64>,
    },
}

/// Symmetric ℤᵈ-periodic modulation with declared bounds μ₋ ≤ μ ≤ μ₊.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuSpec {
    dim: usize,
    family: MuFamily,
    lower: f64,
    upper: f64,
}

/// Relative asymmetry accepted for tabulated μ.
pub const MU_SYMMETRY_TOLERANCE: f64 = 1e-12;

impl MuSpec {
    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidMu(format!("constant must be positive (got {value})")));
        }
        Self::checked(dim, MuFamily::Constant { value }, value, value)
    }

    pub fn cosine_product(dim: usize, base: f64, alpha: f64) -> Result<Self> {
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::InvalidMu(format!("base must be positive (got {base})")));
        }
        if !(alpha.abs() < 1.0) {
            return Err(Error::InvalidMu(format!("|alpha| must be below 1 (got {alpha})")));
        }
        Self::checked(
            dim,
            MuFamily::CosineProduct { base, alpha },
            base * (1.0 - alpha.abs()),
            base * (1.0 + alpha.abs()),
        )
    }

    /// Tabulated μ with `points` nodes per dimension. Bounds default to the
    /// extreme table values.
    pub fn tabulated(dim: usize, points: usize, values: Vec<f64>, bounds: Option<(f64, f64)>) -> Result<Self> {
        let m = points.checked_pow(dim as u32).ok_or_else(|| Error::InvalidMu("table too large".into()))?;
        if points == 0 || values.len() != m * m {
            return Err(Error::InvalidMu(format!(
                "table needs {} values for {points} points per dimension, got {}",
                m * m,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidMu("table values must be positive and finite".into()));
        }
        let scale = values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..m {
            for j in 0..i {
                asym = asym.max((values[i * m + j] - values[j * m + i]).abs());
            }
        }
        if asym > MU_SYMMETRY_TOLERANCE * scale {
            return Err(Error::MuNotSymmetric(asym));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(0.0, f64::max);
        let (lower, upper) = bounds.unwrap_or((lo, hi));
        if lo < lower || hi > upper {
            return Err(Error::InvalidMu(format!(
                "table range [{lo}, {hi}] violates declared bounds [{lower}, {upper}]"
            )));
        }
        Self::checked(dim, MuFamily::Tabulated { points, values }, lower, upper)
    }

    fn checked(dim: usize, family: MuFamily, lower: f64, upper: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidMu(format!("dimension {dim} not in 1..=3")));
        }
        if !(lower > 0.0 && lower <= upper) {
            return Err(Error::InvalidMu(format!("bounds must satisfy 0 < {lower} <= {upper}")));
        }
        Ok(Self { dim, family, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &MuFamily {
        &self.family
    }

    /// μ₋.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// μ₊.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.family, MuFamily::Constant { .. })
            || matches!(self.family, MuFamily::CosineProduct { alpha, .. } if alpha == 0.0)
    }

    /// μ(x, y) for points given by their first `dim` coordinates.
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.family {
            MuFamily::Constant { value } => *value,
            MuFamily::CosineProduct { base, alpha } => {
                let prod: f64 = (0..self.dim).map(|i| (2.0 * PI * x[i]).cos() * (2.0 * PI * y[i]).cos()).product();
                base * (1.0 + alpha * prod)
            }
            MuFamily::Tabulated { points, values } => {
                let m = points.pow(self.dim as u32);
                let cell = |p: &[f64]| {
                    (0..self.dim).rev().fold(0usize, |acc, i| {
                        let k = (p[i] * *points as f64).round() as i64;
                        acc * points + k.rem_euclid(*points as i64) as usize
                    })
                };
                values[cell(x) * m + cell(y)]
            }
        }
    }

    /// Same spec with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let family = match &self.family {
            MuFamily::Constant { value } => MuFamily::Constant { value: value * factor },
            MuFamily::CosineProduct { base, alpha } => MuFamily::CosineProduct { base: base * factor, alpha: *alpha },
            MuFamily::Tabulated { points, values } => {
                MuFamily::Tabulated { points: *points, values: values.iter().map(|v| v * factor).collect() }
            }
        };
        Self::checked(self.dim, family, self.lower * factor, self.upper * factor)
    }
}

/// μ(x, y).
pub fn eval_mu(spec: &MuSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != spec.dim || y.len() != spec.dim {
        return Err(Error::DimensionMismatch("eval_mu: point dimension differs from mu".into()));
    }
    Ok(spec.value(x, y))
}

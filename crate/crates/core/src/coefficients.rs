//! Periodic coefficient matrix `A(y)`, periodic potential `W(y)` and source `f(x)`.
//!
//! All presets are closed-form and smooth, so they are 1-periodic and
//! uniformly elliptic by construction. [`validate`] samples them on a lattice
//! and reports how close the numbers come to the analytic guarantees.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Dense 2×2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

/// Named choices for the periodic matrix `A(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixPreset {
    /// `A = I`
    Identity,
    /// `A = (2 + sin 2πy₁) I`
    Layered,
    /// `A = (2 + sin 2πy₁ sin 2πy₂) I`
    SmoothIso,
}

/// Named choices for the periodic mean-zero potential `W(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialPreset {
    Zero,
    /// `W = sin 2πy₁`
    Sine1,
    /// `W = sin 2πy₁ + cos 2πy₂`
    SineMix,
}

/// Named choices for the source term `f(x)` on the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourcePreset {
    /// `f ≡ 1`
    One,
    /// `f = sin πx₁ sin πx₂`
    SineSine,
}

macro_rules! preset_names {
    ($ty:ty, $key:literal, { $($name:literal => $variant:path),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} '{}' (expected one of: {})",
                        $key,
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self {
                    $($variant => $name,)+
                };
                f.write_str(name)
            }
        }
    };
}

preset_names!(MatrixPreset, "A_preset", {
    "identity" => MatrixPreset::Identity,
    "layered" => MatrixPreset::Layered,
    "smooth-iso" => MatrixPreset::SmoothIso,
});

preset_names!(PotentialPreset, "W_preset", {
    "zero" => PotentialPreset::Zero,
    "sine1" => PotentialPreset::Sine1,
    "sine-mix" => PotentialPreset::SineMix,
});

preset_names!(SourcePreset, "f_preset", {
    "one" => SourcePreset::One,
    "sine-sine" => SourcePreset::SineSine,
});

/// The coefficient data of one experiment. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientModel {
    matrix: MatrixPreset,
    potential: PotentialPreset,
    source: SourcePreset,
    potential_scale: f64,
    potential_shift: [f64; 2],
    kappa: f64,
    preset_name: String,
}

impl CoefficientModel {
    pub fn new(matrix: MatrixPreset, potential: PotentialPreset, source: SourcePreset) -> Self {
        let kappa = match matrix {
            // κ must lie in (0,1); the identity is elliptic with any κ < 1.
            MatrixPreset::Identity => 0.999,
            // values of 2 + sin(·) and 2 + sin·sin lie in [1, 3]
            MatrixPreset::Layered | MatrixPreset::SmoothIso => 1.0 / 3.0,
        };
        Self {
            matrix,
            potential,
            source,
            potential_scale: 1.0,
            potential_shift: [0.0, 0.0],
            kappa,
            preset_name: format!("{matrix}/{potential}/{source}"),
        }
    }

    /// Multiplies `W` by `scale`. Used to explore loss of coercivity.
    pub fn with_potential_scale(mut self, scale: f64) -> Self {
        self.potential_scale = scale;
        if scale != 1.0 {
            self.preset_name = format!(
                "{}/{}x{}/{}",
                self.matrix, scale, self.potential, self.source
            );
        }
        self
    }

    /// Evaluates `W` at `y + shift`. The presets share reflection symmetries
    /// with `A` that make some cell integrals vanish identically; a shift
    /// breaks them while keeping `W` periodic and mean-zero.
    pub fn with_potential_shift(mut self, shift: [f64; 2]) -> Self {
        self.potential_shift = shift;
        if shift != [0.0, 0.0] {
            self.preset_name = format!("{}+[{}, {}]", self.preset_name, shift[0], shift[1]);
        }
        self
    }

    pub fn matrix_preset(&self) -> MatrixPreset {
        self.matrix
    }

    pub fn potential_preset(&self) -> PotentialPreset {
        self.potential
    }

    pub fn source_preset(&self) -> SourcePreset {
        self.source
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn preset_name(&self) -> &str {
        &self.preset_name
    }

    pub fn potential_scale(&self) -> f64 {
        self.potential_scale
    }

    /// `A(y)` at a point of the periodic cell (any `y ∈ ℝ²`).
    #[inline]
    pub fn a(&self, y: [f64; 2]) -> Mat2 {
        let s = match self.matrix {
            MatrixPreset::Identity => 1.0,
            MatrixPreset::Layered => 2.0 + (2.0 * PI * y[0]).sin(),
            MatrixPreset::SmoothIso => 2.0 + (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).sin(),
        };
        [[s, 0.0], [0.0, s]]
    }

    /// `W(y)`.
    #[inline]
    pub fn w(&self, y: [f64; 2]) -> f64 {
        let y = [y[0] + self.potential_shift[0], y[1] + self.potential_shift[1]];
        let w = match self.potential {
            PotentialPreset::Zero => 0.0,
            PotentialPreset::Sine1 => (2.0 * PI * y[0]).sin(),
            PotentialPreset::SineMix => (2.0 * PI * y[0]).sin() + (2.0 * PI * y[1]).cos(),
        };
        self.potential_scale * w
    }

    /// Upper bound of `|W|`, used to pick safe spectral shifts.
    pub fn w_sup(&self) -> f64 {
        let sup = match self.potential {
            PotentialPreset::Zero => 0.0,
            PotentialPreset::Sine1 => 1.0,
            PotentialPreset::SineMix => 2.0,
        };
        self.potential_scale.abs() * sup
    }

    pub fn has_potential(&self) -> bool {
        self.potential != PotentialPreset::Zero && self.potential_scale != 0.0
    }

    /// `f(x)` on the unit square.
    #[inline]
    pub fn f(&self, x: [f64; 2]) -> f64 {
        match self.source {
            SourcePreset::One => 1.0,
            SourcePreset::SineSine => (PI * x[0]).sin() * (PI * x[1]).sin(),
        }
    }

    /// Exact `‖f‖_{L²(Ω)}`.
    pub fn f_l2_norm(&self) -> f64 {
        match self.source {
            SourcePreset::One => 1.0,
            SourcePreset::SineSine => 0.5,
        }
    }
}

/// Builds a validated model from the three preset keys.
pub fn make_preset(matrix: &str, potential: &str, source: &str) -> Result<CoefficientModel> {
    let model = CoefficientModel::new(matrix.parse()?, potential.parse()?, source.parse()?);
    let report = validate(&model, 32);
    if !report.passed {
        return Err(Error::Config(format!(
            "preset {} failed validation: {report:?}",
            model.preset_name()
        )));
    }
    Ok(model)
}

/// Lattice diagnostics of a [`CoefficientModel`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub lattice_n: usize,
    pub max_symmetry_defect: f64,
    pub min_rayleigh: f64,
    pub max_rayleigh: f64,
    pub max_periodicity_defect: f64,
    pub mean_w: f64,
    pub passed: bool,
}

const SYMMETRY_TOL: f64 = 1e-14;
const PERIODICITY_TOL: f64 = 1e-12;
const MEAN_W_TOL: f64 = 1e-12;

/// Samples the model on an `n × n` lattice of the unit cell.
///
/// `|mean W|` uses 2×2 Gauss quadrature on the same lattice, which is the
/// rule the cell solver integrates with.
pub fn validate(model: &CoefficientModel, lattice_n: usize) -> ValidationReport {
    let n = lattice_n.max(1);
    let h = 1.0 / n as f64;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let directions = [[1.0, 0.0], [0.0, 1.0], [s, s], [s, -s]];
    let shifts = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-2.0, 3.0]];

    let mut max_sym: f64 = 0.0;
    let mut min_rq = f64::INFINITY;
    let mut max_rq = f64::NEG_INFINITY;
    let mut max_per: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let y = [i as f64 * h, j as f64 * h];
            let a = model.a(y);
            max_sym = max_sym.max((a[0][1] - a[1][0]).abs());
            for xi in &directions {
                let q = xi[0] * (a[0][0] * xi[0] + a[0][1] * xi[1])
                    + xi[1] * (a[1][0] * xi[0] + a[1][1] * xi[1]);
                let norm2 = xi[0] * xi[0] + xi[1] * xi[1];
                min_rq = min_rq.min(q / norm2);
                max_rq = max_rq.max(q / norm2);
            }
            let w = model.w(y);
            for z in &shifts {
                let ys = [y[0] + z[0], y[1] + z[1]];
                let a_s = model.a(ys);
                for r in 0..2 {
                    for c in 0..2 {
                        max_per = max_per.max((a_s[r][c] - a[r][c]).abs());
                    }
                }
                max_per = max_per.max((model.w(ys) - w).abs());
            }
        }
    }

    let g = 0.5 / 3f64.sqrt();
    let offsets = [0.5 - g, 0.5 + g];
    let mut sum_w = 0.0;
    for j in 0..n {
        for i in 0..n {
            for oy in offsets {
                for ox in offsets {
                    sum_w += model.w([(i as f64 + ox) * h, (j as f64 + oy) * h]);
                }
            }
        }
    }
    let mean_w = sum_w * 0.25 * h * h;

    let kappa = model.kappa();
    let passed = max_sym <= SYMMETRY_TOL
        && min_rq >= kappa
        && max_rq <= 1.0 / kappa
        && max_per <= PERIODICITY_TOL
        && mean_w.abs() <= MEAN_W_TOL;

    ValidationReport {
        lattice_n: n,
        max_symmetry_defect: max_sym,
        min_rayleigh: min_rq,
        max_rayleigh: max_rq,
        max_periodicity_defect: max_per,
        mean_w,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_models() -> Vec<CoefficientModel> {
        let mut out = Vec::new();
        for a in [MatrixPreset::Identity, MatrixPreset::Layered, MatrixPreset::SmoothIso] {
            for w in [PotentialPreset::Zero, PotentialPreset::Sine1, PotentialPreset::SineMix] {
                for f in [SourcePreset::One, SourcePreset::SineSine] {
                    out.push(CoefficientModel::new(a, w, f));
                }
            }
        }
        out
    }

    #[test]
    fn identity_preset_is_identity() {
        let m = make_preset("identity", "zero", "one").unwrap();
        for y in [[0.1, 0.7], [0.5, 0.5], [3.2, -1.4]] {
            assert_eq!(m.a(y), [[1.0, 0.0], [0.0, 1.0]]);
            assert_eq!(m.w(y), 0.0);
        }
    }

    #[test]
    fn layered_peak_value() {
        let m = make_preset("layered", "sine1", "one").unwrap();
        let a = m.a([0.25, 0.61]);
        assert!((a[0][0] - 3.0).abs() < 1e-15);
        assert!((a[1][1] - 3.0).abs() < 1e-15);
        assert_eq!(a[0][1], 0.0);
    }

    #[test]
    fn sine_mix_mean_zero_by_quadrature() {
        let m = make_preset("smooth-iso", "sine-mix", "sine-sine").unwrap();
        // independent midpoint rule on a fine lattice
        let n = 200;
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                let y = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                s += (2.0 * PI * y[0]).sin() + (2.0 * PI * y[1]).cos();
            }
        }
        assert!((s / (n * n) as f64).abs() < 1e-12);
        assert!(validate(&m, 64).mean_w.abs() <= 1e-12);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = make_preset("checkerboard", "zero", "one").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("A_preset") && msg.contains("checkerboard"), "{msg}");
        let err = make_preset("identity", "cosine", "one").unwrap_err();
        assert!(err.to_string().contains("W_preset"));
        let err = make_preset("identity", "zero", "two").unwrap_err();
        assert!(err.to_string().contains("f_preset"));
    }

    #[test]
    fn validation_ranges() {
        let id = CoefficientModel::new(MatrixPreset::Identity, PotentialPreset::Zero, SourcePreset::One);
        let r = validate(&id, 16);
        assert_eq!(r.min_rayleigh, 1.0);
        assert_eq!(r.max_rayleigh, 1.0);

        let lay = CoefficientModel::new(MatrixPreset::Layered, PotentialPreset::Sine1, SourcePreset::One);
        let r = validate(&lay, 64);
        assert!(r.min_rayleigh >= 1.0 && r.max_rayleigh <= 3.0);
        assert!(r.mean_w.abs() <= 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn every_preset_validates_at_128() {
        for m in all_models() {
            let r = validate(&m, 128);
            assert!(r.passed, "{}: {r:?}", m.preset_name());
        }
    }

    #[test]
    fn layered_depends_only_on_y1() {
        let m = CoefficientModel::new(MatrixPreset::Layered, PotentialPreset::Zero, SourcePreset::One);
        for i in 0..32 {
            let y1 = i as f64 / 32.0;
            let a0 = m.a([y1, 0.0]);
            for j in 0..32 {
                let a = m.a([y1, j as f64 / 32.0]);
                assert!((a[0][0] - a0[0][0]).abs() <= 1e-14);
                assert!((a[1][1] - a0[1][1]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn display_round_trips() {
        for m in all_models() {
            let name = m.preset_name().to_string();
            let parts: Vec<&str> = name.split('/').collect();
            let again = make_preset(parts[0], parts[1], parts[2]).unwrap();
            assert_eq!(again, m);
        }
    }

    #[test]
    fn shifted_potential_stays_valid() {
        let base = CoefficientModel::new(MatrixPreset::Layered, PotentialPreset::SineMix, SourcePreset::One);
        let m = base.clone().with_potential_shift([0.125, 0.0625]);
        assert!(validate(&m, 64).passed);
        assert_eq!(m.w([0.0, 0.0]), base.w([0.125, 0.0625]));
        assert_eq!(m.a([0.3, 0.7]), base.a([0.3, 0.7]));
        assert_ne!(m.preset_name(), base.preset_name());
    }
}

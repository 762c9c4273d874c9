use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TABLE3: &str = include_str!("../../data/table3.params");

/// How the backward-Euler fixed point updates the viscous dashpot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedPointScheme {
    /// Each sweep solves the scalar viscous flow increment implicitly along
    /// the current flow direction.
    ImplicitRate,
    /// Each sweep evaluates the flow rate at the previous iterate.
    Plain,
}

impl FixedPointScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            FixedPointScheme::ImplicitRate => "implicit-rate",
            FixedPointScheme::Plain => "plain",
        }
    }
}

impl FromStr for FixedPointScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit-rate" => Ok(FixedPointScheme::ImplicitRate),
            "plain" => Ok(FixedPointScheme::Plain),
            other => Err(Error::InvalidParams(format!("unknown fixed-point scheme `{other}`"))),
        }
    }
}

/// Constants of the constitutive model plus the environment and solver knobs.
///
/// Stresses in MPa, time in s, energies in J, temperature in K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub mu_eq0: f64,
    pub mu_neq0: f64,
    pub k_v: f64,
    pub eps_dot_0: f64,
    pub delta_h: f64,
    pub m: f64,
    pub y_0: f64,
    pub x_0: f64,
    pub b_s: f64,
    pub a_s: f64,
    pub a_vp: f64,
    pub b_vp: f64,
    pub sigma_0: f64,
    pub a_dmg: f64,
    pub alpha_w: f64,
    pub k_b: f64,
    pub temperature: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub perturb_alpha: f64,
    pub fp_scheme: FixedPointScheme,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams::table3()
    }
}

const KEYS: [&str; 21] = [
    "mu_eq0",
    "mu_neq0",
    "k_v",
    "eps_dot_0",
    "delta_H",
    "m",
    "y_0",
    "x_0",
    "b_s",
    "a_s",
    "a_vp",
    "b_vp",
    "sigma_0",
    "A_dmg",
    "alpha_w",
    "k_b",
    "T",
    "fp_tol",
    "fp_max_iter",
    "perturb_alpha",
    "fp_scheme",
];

impl MaterialParams {
    /// The bundled calibrated parameter set.
    pub fn table3() -> Self {
        let base = MaterialParams {
            mu_eq0: 0.0,
            mu_neq0: 0.0,
            k_v: 0.0,
            eps_dot_0: 0.0,
            delta_h: 0.0,
            m: 0.0,
            y_0: 0.0,
            x_0: 0.0,
            b_s: 0.0,
            a_s: 0.0,
            a_vp: 0.0,
            b_vp: 0.0,
            sigma_0: 0.0,
            a_dmg: 0.0,
            alpha_w: 0.0,
            k_b: 0.0,
            temperature: 0.0,
            fp_tol: 0.0,
            fp_max_iter: 0,
            perturb_alpha: 0.0,
            fp_scheme: FixedPointScheme::ImplicitRate,
        };
        base.with_overrides(TABLE3, Path::new("<bundled table3.params>"))
            .expect("bundled parameter document is valid")
    }

    /// Dimensionless Argon activation ratio `ΔH / (k_b T)`.
    pub fn activation_ratio(&self) -> f64 {
        self.delta_h / (self.k_b * self.temperature)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu_eq0", self.mu_eq0),
            ("mu_neq0", self.mu_neq0),
            ("k_v", self.k_v),
            ("sigma_0", self.sigma_0),
            ("m", self.m),
            ("fp_tol", self.fp_tol),
            ("b_s", self.b_s),
            ("k_b", self.k_b),
            ("T", self.temperature),
            ("perturb_alpha", self.perturb_alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        // eps_dot_0 = 0 freezes the viscous dashpot, which is a useful limit
        let non_negative = [
            ("eps_dot_0", self.eps_dot_0),
            ("A_dmg", self.a_dmg),
            ("a_vp", self.a_vp),
            ("delta_H", self.delta_h),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be non-negative and finite, got {v}")));
            }
        }
        for (name, v) in [("y_0", self.y_0), ("x_0", self.x_0), ("a_s", self.a_s), ("b_vp", self.b_vp), ("alpha_w", self.alpha_w)] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite, got {v}")));
            }
        }
        if self.fp_max_iter == 0 {
            return Err(Error::InvalidParams("fp_max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Unknown keys are errors.
    pub fn with_overrides(mut self, text: &str, origin: &Path) -> Result<Self> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            self.set(key, value).map_err(|e| parse_err(e.to_string()))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        MaterialParams::table3().with_overrides(text, origin)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        MaterialParams::from_text(&text, path)
    }

    /// Sets one field from its document key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::InvalidParams(format!("`{key}`: `{value}` is not a number")))
        };
        match key {
            "mu_eq0" => self.mu_eq0 = num()?,
            "mu_neq0" => self.mu_neq0 = num()?,
            "k_v" => self.k_v = num()?,
            "eps_dot_0" => self.eps_dot_0 = num()?,
            "delta_H" => self.delta_h = num()?,
            "m" => self.m = num()?,
            "y_0" => self.y_0 = num()?,
            "x_0" => self.x_0 = num()?,
            "b_s" => self.b_s = num()?,
            "a_s" => self.a_s = num()?,
            "a_vp" => self.a_vp = num()?,
            "b_vp" => self.b_vp = num()?,
            "sigma_0" => self.sigma_0 = num()?,
            "A_dmg" => self.a_dmg = num()?,
            "alpha_w" => self.alpha_w = num()?,
            "k_b" => self.k_b = num()?,
            "T" => self.temperature = num()?,
            "fp_tol" => self.fp_tol = num()?,
            "fp_max_iter" => {
                self.fp_max_iter = value
                    .parse()
                    .map_err(|_| Error::InvalidParams(format!("`fp_max_iter`: `{value}` is not a count")))?
            }
            "perturb_alpha" => self.perturb_alpha = num()?,
            "fp_scheme" => self.fp_scheme = value.parse()?,
            other => return Err(Error::InvalidParams(format!("unknown parameter `{other}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "mu_eq0" => self.mu_eq0.to_string(),
                "mu_neq0" => self.mu_neq0.to_string(),
                "k_v" => self.k_v.to_string(),
                "eps_dot_0" => format!("{:e}", self.eps_dot_0),
                "delta_H" => format!("{:e}", self.delta_h),
                "m" => self.m.to_string(),
                "y_0" => self.y_0.to_string(),
                "x_0" => self.x_0.to_string(),
                "b_s" => self.b_s.to_string(),
                "a_s" => self.a_s.to_string(),
                "a_vp" => self.a_vp.to_string(),
                "b_vp" => self.b_vp.to_string(),
                "sigma_0" => self.sigma_0.to_string(),
                "A_dmg" => self.a_dmg.to_string(),
                "alpha_w" => self.alpha_w.to_string(),
                "k_b" => format!("{:e}", self.k_b),
                "T" => self.temperature.to_string(),
                "fp_tol" => format!("{:e}", self.fp_tol),
                "fp_max_iter" => self.fp_max_iter.to_string(),
                "perturb_alpha" => format!("{:e}", self.perturb_alpha),
                "fp_scheme" => self.fp_scheme.as_str().to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

impl fmt::Display for MaterialParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Moisture content and filler loading of a material point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Environment {
    /// Moisture content as a mass fraction.
    pub w_w: f64,
    /// Nanoparticle volume fraction.
    pub v_np: f64,
}

impl Environment {
    pub const DRY_NEAT: Environment = Environment { w_w: 0.0, v_np: 0.0 };

    pub fn new(w_w: f64, v_np: f64) -> Self {
        Environment { w_w, v_np }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.3).contains(&self.v_np) {
            return Err(Error::InvalidEnvironment(format!("v_np = {} outside [0, 0.3]", self.v_np)));
        }
        if !(0.0..=0.05).contains(&self.w_w) {
            return Err(Error::InvalidEnvironment(format!("w_w = {} outside [0, 0.05]", self.w_w)));
        }
        Ok(())
    }
}

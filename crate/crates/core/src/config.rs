//! Solver parameters, their defaults, and a plain `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! p = 5
//! q = 70
//! k = auto        # or a fixed subspace dimension
//! lambda1 = 0.2
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the noise variance that scales the group penalty is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// One robust estimate over the whole cube per outer iteration.
    Global,
    /// A robust estimate over the pixels each group covers.
    Group,
}

impl FromStr for SigmaMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "global" => Ok(Self::Global),
            "group" => Ok(Self::Group),
            other => Err(format!("sigma_mode must be global or group, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Patch side in pixels.
    pub p: usize,
    /// Patches per group.
    pub q: usize,
    /// Fixed initial subspace dimension; `None` selects it from the data.
    pub k: Option<usize>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Share of the previous estimate mixed into the next input.
    pub alpha: f64,
    /// Subspace growth per outer iteration.
    pub beta: f64,
    /// Outer iterations `N`.
    pub iters: usize,
    /// Reweighting rounds per group `N0`.
    pub inner_rounds: usize,
    /// Maximum sparse/reduced/basis cycles `N1`.
    pub max_cycles: usize,
    /// Relative-change tolerance ending the cycles early.
    pub tol: f64,
    pub c: f64,
    pub eps: f64,
    pub stride: usize,
    pub window: usize,
    pub sigma_mode: SigmaMode,
    /// Optional cap on every Tucker rank of a group.
    pub max_rank: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 5,
            q: 70,
            k: None,
            lambda1: 0.2,
            lambda2: 0.1,
            alpha: 0.9,
            beta: 1.0,
            iters: 6,
            inner_rounds: 2,
            max_cycles: 10,
            tol: 1e-4,
            c: std::f64::consts::SQRT_2,
            eps: 1e-16,
            stride: 4,
            window: 30,
            sigma_mode: SigmaMode::Global,
            max_rank: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "p",
    "q",
    "k",
    "lambda1",
    "lambda2",
    "alpha",
    "beta",
    "iters",
    "inner_rounds",
    "max_cycles",
    "tol",
    "c",
    "eps",
    "stride",
    "window",
    "sigma_mode",
    "max_rank",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn parse_optional(key: &str, value: &str) -> std::result::Result<Option<usize>, String> {
    match value {
        "auto" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl SolverConfig {
    /// Sets one parameter from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "p" => self.p = parse(key, value)?,
            "q" => self.q = parse(key, value)?,
            "k" => self.k = parse_optional(key, value)?,
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "iters" => self.iters = parse(key, value)?,
            "inner_rounds" => self.inner_rounds = parse(key, value)?,
            "max_cycles" => self.max_cycles = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "sigma_mode" => self.sigma_mode = value.parse()?,
            "max_rank" => self.max_rank = parse_optional(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Every malformed line is
    /// reported, not just the first.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut problems = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((key, value)) => {
                    if let Err(e) = self.set(key.trim(), value) {
                        problems.push(format!("line {}: {e}", n + 1));
                    }
                }
                None => problems.push(format!("line {}: expected key = value, got {line:?}", n + 1)),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Defaults overridden by a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Serializes every parameter so that [`apply_text`](Self::apply_text)
    /// reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |k| k.to_string());
        let mut out = String::new();
        let rows: [(&str, String); 17] = [
            ("p", self.p.to_string()),
            ("q", self.q.to_string()),
            ("k", opt(self.k)),
            ("lambda1", format!("{:?}", self.lambda1)),
            ("lambda2", format!("{:?}", self.lambda2)),
            ("alpha", format!("{:?}", self.alpha)),
            ("beta", format!("{:?}", self.beta)),
            ("iters", self.iters.to_string()),
            ("inner_rounds", self.inner_rounds.to_string()),
            ("max_cycles", self.max_cycles.to_string()),
            ("tol", format!("{:?}", self.tol)),
            ("c", format!("{:?}", self.c)),
            ("eps", format!("{:?}", self.eps)),
            ("stride", self.stride.to_string()),
            ("window", self.window.to_string()),
            (
                "sigma_mode",
                match self.sigma_mode {
                    SigmaMode::Global => "global".into(),
                    SigmaMode::Group => "group".into(),
                },
            ),
            ("max_rank", opt(self.max_rank)),
        ];
        for (key, value) in rows {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Checks every constraint that does not depend on the input cube and
    /// reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let problems = self.problems(None);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// [`validate`](Self::validate) plus the cube-dependent limits.
    pub fn validate_for(&self, dims: (usize, usize, usize)) -> Result<()> {
        let problems = self.problems(Some(dims));
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    fn problems(&self, dims: Option<(usize, usize, usize)>) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        check(self.p >= 1, format!("p must be at least 1, got {}", self.p));
        check(self.q >= 1, format!("q must be at least 1, got {}", self.q));
        if let Some(k) = self.k {
            check(k >= 1, format!("k must be at least 1, got {k}"));
        }
        for (name, value) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("beta", self.beta),
        ] {
            check(
                value.is_finite() && value >= 0.0,
                format!("{name} must be finite and nonnegative, got {value}"),
            );
        }
        check(
            (0.0..=1.0).contains(&self.alpha),
            format!("alpha must lie in [0, 1], got {}", self.alpha),
        );
        for (name, value) in [
            ("iters", self.iters),
            ("inner_rounds", self.inner_rounds),
            ("max_cycles", self.max_cycles),
            ("stride", self.stride),
            ("window", self.window),
        ] {
            check(value >= 1, format!("{name} must be at least 1, got {value}"));
        }
        // larger steps leave pixels between reference patches uncovered
        check(
            self.p == 0 || self.stride <= self.p,
            format!("stride = {} must not exceed the patch size p = {}", self.stride, self.p),
        );
        check(
            self.tol.is_finite() && self.tol >= 0.0,
            format!("tol must be finite and nonnegative, got {}", self.tol),
        );
        check(
            self.c.is_finite() && self.c > 0.0,
            format!("c must be positive, got {}", self.c),
        );
        check(
            self.eps.is_finite() && self.eps > 0.0,
            format!("eps must be positive, got {}", self.eps),
        );
        if let Some(r) = self.max_rank {
            check(r >= 1, format!("max_rank must be at least 1, got {r}"));
        }
        if let Some((n1, n2, n3)) = dims {
            check(
                self.p <= n1.min(n2),
                format!("p = {} exceeds the image size {n1}x{n2}", self.p),
            );
            if let Some(k) = self.k {
                check(k <= n3, format!("k = {k} exceeds the band count {n3}"));
            }
            if self.p <= n1.min(n2) {
                let available = crate::patch::min_window_positions(n1, self.p, self.window)
                    * crate::patch::min_window_positions(n2, self.p, self.window);
                check(
                    self.q <= available,
                    format!(
                        "q = {} exceeds the {available} candidate patches a {}-pixel window guarantees on {n1}x{n2}",
                        self.q, self.window
                    ),
                );
            }
        }
        v
    }
}

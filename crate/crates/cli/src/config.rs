//! Study configuration: `key = value` lines grouped under `[section]` headers.
//!
//! ```text
//! [problem]
//! name = power11
//! d1 = 1000
//!
//! [geometry]
//! domain = -1 1 -1 1
//! interface = box -0.5 0.5 -0.5 0.5
//!
//! [levels]
//! coarsest_n = 8
//! count = 4
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use tgfem::mesh::{InterfaceShape, Rect};
use tgfem::problems::{builtin_problem, manufactured_interface_problem, ManufacturedSolution, ProblemParams};
use tgfem::quadrature::QuadratureRule;
use tgfem::solvers::{NewtonOptions, Preconditioner};
use tgfem::twogrid::Snap;
use tgfem::{Geometry, Problem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] {key}: {message}")]
    Value { section: String, key: String, message: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error(transparent)]
    Problem(#[from] tgfem::problems::ProblemError),
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("unterminated section header `{content}`") })?;
            current = name.trim().to_string();
            if current.is_empty() {
                return Err(ConfigError::Syntax { line, message: "empty section name".into() });
            }
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line, message: "missing key".into() });
        }
        if current.is_empty() {
            return Err(ConfigError::Syntax { line, message: format!("`{key}` appears before any [section]") });
        }
        let previous = sections.entry(current.clone()).or_default().insert(key.to_string(), (line, value.trim().to_string()));
        if previous.is_some() {
            return Err(ConfigError::Syntax { line, message: format!("duplicate key `{key}`") });
        }
    }
    Ok(sections)
}

/// Typed access to one section; every key must be consumed.
struct Section {
    name: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Value { section: self.name.clone(), key: key.to_string(), message: message.into() }
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take_str(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| self.error(key, format!("cannot parse `{v}`"))),
        }
    }

    fn take_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take_str(key) {
            None => Ok(None),
            Some(v) => v
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| self.error(key, format!("cannot parse `{t}`"))))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn positive(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take::<f64>(key)? {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(self.error(key, format!("must be positive, got {v}"))),
            other => Ok(other),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_keys().next() {
            Some(key) => Err(ConfigError::UnknownKey { section: self.name, key }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub params: ProblemParams,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub problem: ProblemSpec,
    pub geometry: Option<Geometry>,
    pub coarsest_n: usize,
    pub levels: usize,
    pub newton: NewtonOptions,
    pub coarse_abs_tol: f64,
    pub linear_rtol: f64,
    pub reference_levels: usize,
    pub s: f64,
    pub tau: f64,
    pub snap: Snap,
    /// Coarsest admissible two-grid mesh.
    pub twogrid_coarsest_n: usize,
    /// Fine two-grid levels as refinement counts above `twogrid_coarsest_n`.
    pub fine_levels: Vec<usize>,
    pub out_dir: String,
    pub timing: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            problem: ProblemSpec { name: "power11".into(), params: ProblemParams::new() },
            geometry: None,
            coarsest_n: 8,
            levels: 4,
            newton: NewtonOptions::default(),
            coarse_abs_tol: 1e-12,
            linear_rtol: 1e-12,
            reference_levels: 2,
            s: 2.0,
            tau: 2.0,
            snap: Snap::Up,
            twogrid_coarsest_n: 4,
            fine_levels: vec![3, 4, 5],
            out_dir: "out".into(),
            timing: true,
        }
    }
}

fn parse_snap(s: &str) -> Option<Snap> {
    match s {
        "up" => Some(Snap::Up),
        "nearest" => Some(Snap::Nearest),
        _ => None,
    }
}

pub fn snap_from_flag(s: &str) -> Result<Snap, ConfigError> {
    parse_snap(s).ok_or_else(|| ConfigError::Value { section: "flags".into(), key: "snap".into(), message: format!("expected up or nearest, got `{s}`") })
}

fn parse_geometry(section: &mut Section) -> Result<Option<Geometry>, ConfigError> {
    let domain = section.take_list("domain")?;
    let interface = section.take_str("interface");
    if domain.is_none() && interface.is_none() {
        return Ok(None);
    }
    let domain = match domain {
        None => Rect::square(-1.0, 1.0),
        Some(v) if v.len() == 4 && v[0] < v[1] && v[2] < v[3] => Rect::new(v[0], v[1], v[2], v[3]),
        Some(v) => return Err(section.error("domain", format!("expected `x0 x1 y0 y1` with x0 < x1, y0 < y1, got {v:?}"))),
    };
    let interface = match interface.as_deref().map(str::split_whitespace).map(|t| t.collect::<Vec<_>>()) {
        None => InterfaceShape::Box(Rect::new(-0.5, 0.5, -0.5, 0.5)),
        Some(tokens) => {
            let numbers: Result<Vec<f64>, _> = tokens.iter().skip(1).map(|t| t.parse::<f64>()).collect();
            match (tokens.first().copied(), numbers) {
                (Some("box"), Ok(v)) if v.len() == 4 && v[0] < v[1] && v[2] < v[3] => {
                    InterfaceShape::Box(Rect::new(v[0], v[1], v[2], v[3]))
                }
                (Some("line"), Ok(v)) if v.len() == 1 => InterfaceShape::VerticalLine(v[0]),
                _ => return Err(section.error("interface", "expected `box x0 x1 y0 y1` or `line x`")),
            }
        }
    };
    Ok(Some(Geometry { domain, interface }))
}

impl StudyConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = StudyConfig::default();
        for (name, entries) in parse_sections(text)? {
            let mut s = Section { name: name.clone(), entries };
            match name.as_str() {
                "problem" => {
                    if let Some(n) = s.take_str("name") {
                        config.problem.name = n;
                    }
                    // the remaining keys are problem parameters, checked when the problem is built
                    for key in s.entries.keys().cloned().collect::<Vec<_>>() {
                        let value = s.take::<f64>(&key)?.unwrap();
                        config.problem.params.insert(key, value);
                    }
                }
                "geometry" => config.geometry = parse_geometry(&mut s)?,
                "levels" => {
                    if let Some(n) = s.take::<usize>("coarsest_n")? {
                        config.coarsest_n = n;
                    }
                    if let Some(k) = s.take::<usize>("count")? {
                        config.levels = k;
                    }
                    if let Some(k) = s.take::<usize>("reference_levels")? {
                        config.reference_levels = k;
                    }
                }
                "solver" => {
                    let n = &mut config.newton;
                    if let Some(v) = s.positive("abs_tol")? {
                        n.abs_tol = v;
                    }
                    if let Some(v) = s.positive("rel_tol")? {
                        n.rel_tol = v;
                    }
                    if let Some(v) = s.take::<usize>("max_iters")? {
                        n.max_iters = v;
                    }
                    if let Some(v) = s.positive("min_step")? {
                        n.min_step = v;
                    }
                    if let Some(v) = s.positive("linear_rtol_floor")? {
                        n.linear_rtol_floor = v;
                    }
                    if let Some(v) = s.take::<usize>("linear_max_iters")? {
                        n.linear_max_iters = v;
                    }
                    if let Some(p) = s.take_str("preconditioner") {
                        n.preconditioner = match p.as_str() {
                            "jacobi" => Preconditioner::Jacobi,
                            "none" => Preconditioner::None,
                            _ => return Err(s.error("preconditioner", format!("expected jacobi or none, got `{p}`"))),
                        };
                    }
                    if let Some(d) = s.take::<u32>("quad_degree")? {
                        n.quadrature = quadrature(d).map_err(|m| s.error("quad_degree", m))?;
                    }
                }
                "twogrid" => {
                    if let Some(v) = s.take::<f64>("s")? {
                        config.s = v;
                    }
                    if let Some(v) = s.take::<f64>("tau")? {
                        config.tau = v;
                    }
                    if let Some(v) = s.take_str("snap") {
                        config.snap = parse_snap(&v).ok_or_else(|| s.error("snap", format!("expected up or nearest, got `{v}`")))?;
                    }
                    if let Some(v) = s.take::<usize>("coarsest_n")? {
                        config.twogrid_coarsest_n = v;
                    }
                    if let Some(v) = s.take_list("fine_levels")? {
                        if v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
                            return Err(s.error("fine_levels", "expected nonnegative integers"));
                        }
                        config.fine_levels = v.into_iter().map(|x| x as usize).collect();
                    }
                    if let Some(v) = s.positive("coarse_abs_tol")? {
                        config.coarse_abs_tol = v;
                    }
                    if let Some(v) = s.positive("linear_rtol")? {
                        config.linear_rtol = v;
                    }
                }
                "output" => {
                    if let Some(v) = s.take_str("dir") {
                        config.out_dir = v;
                    }
                    if let Some(v) = s.take::<bool>("timing")? {
                        config.timing = v;
                    }
                }
                _ => return Err(ConfigError::UnknownSection(name)),
            }
            s.finish()?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |section: &str, key: &str, message: &str| ConfigError::Value {
            section: section.into(),
            key: key.into(),
            message: message.into(),
        };
        if self.levels == 0 {
            return Err(bad("levels", "count", "need at least one level"));
        }
        if self.coarsest_n == 0 || self.twogrid_coarsest_n == 0 {
            return Err(bad("levels", "coarsest_n", "must be positive"));
        }
        if self.fine_levels.is_empty() || self.fine_levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("twogrid", "fine_levels", "need a strictly increasing, nonempty list"));
        }
        if !(self.s > 1.0 && self.tau > 1.0) {
            return Err(bad("twogrid", "s", "s and tau must exceed 1"));
        }
        Ok(())
    }

    /// The configured problem and, for the manufactured problem, its exact solution.
    pub fn build_problem(&self) -> Result<(Problem, Option<ManufacturedSolution>), ConfigError> {
        if self.problem.name == "manufactured" {
            let mut params = self.problem.params.clone();
            let d1 = params.remove("d1").unwrap_or(1000.0);
            let d2 = params.remove("d2").unwrap_or(1.0);
            if let Some(key) = params.into_keys().next() {
                return Err(tgfem::problems::ProblemError::UnknownParameter { problem: "manufactured".into(), param: key }.into());
            }
            if self.geometry.is_some() {
                return Err(ConfigError::Value {
                    section: "geometry".into(),
                    key: "domain".into(),
                    message: "the manufactured problem fixes its own geometry".into(),
                });
            }
            let (problem, exact) = manufactured_interface_problem(d1, d2)?;
            return Ok((problem, Some(exact)));
        }
        let mut problem = builtin_problem(&self.problem.name, &self.problem.params)?;
        if let Some(g) = &self.geometry {
            problem.geometry = *g;
        }
        Ok((problem, None))
    }
}

pub fn quadrature(degree: u32) -> Result<QuadratureRule, String> {
    if (1..=10).contains(&degree) {
        Ok(QuadratureRule::with_degree(degree))
    } else {
        Err(format!("quadrature degree must lie in 1..=10, got {degree}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config() {
        let text = "# study\n[problem]\nname = linear_reaction\nc = 10\n\n[geometry]\ndomain = -1 1 -1 1\ninterface = box -0.5 0.5 -0.5 0.5\n\
                    [levels]\ncoarsest_n = 4\ncount = 3 # three levels\n[solver]\nabs_tol = 1e-11\npreconditioner = none\nquad_degree = 3\n\
                    [twogrid]\nsnap = nearest\nfine_levels = 2 3\n[output]\ndir = results\ntiming = false\n";
        let c = StudyConfig::parse(text).unwrap();
        assert_eq!(c.problem.name, "linear_reaction");
        assert_eq!(c.problem.params["c"], 10.0);
        assert_eq!((c.coarsest_n, c.levels), (4, 3));
        assert_eq!(c.newton.abs_tol, 1e-11);
        assert_eq!(c.newton.preconditioner, Preconditioner::None);
        assert_eq!(c.newton.quadrature.degree(), 5);
        assert_eq!(c.snap, Snap::Nearest);
        assert_eq!(c.fine_levels, vec![2, 3]);
        assert_eq!(c.out_dir, "results");
        assert!(!c.timing);
        assert!(c.build_problem().is_ok());
    }

    #[test]
    fn empty_config_is_default() {
        let c = StudyConfig::parse("").unwrap();
        assert_eq!(c.problem.name, "power11");
        assert_eq!(c.levels, 4);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        match StudyConfig::parse("[levels]\ncount 3\n") {
            Err(ConfigError::Syntax { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(StudyConfig::parse("count = 3\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(StudyConfig::parse("[levels\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(StudyConfig::parse("[levels]\ncount = 1\ncount = 2\n"), Err(ConfigError::Syntax { line: 3, .. })));
    }

    #[test]
    fn value_errors() {
        assert!(matches!(StudyConfig::parse("[levels]\ncount = many\n"), Err(ConfigError::Value { .. })));
        assert!(matches!(StudyConfig::parse("[levels]\ncount = 0\n"), Err(ConfigError::Value { .. })));
        assert!(matches!(StudyConfig::parse("[solver]\nabs_tol = -1\n"), Err(ConfigError::Value { .. })));
        assert!(matches!(StudyConfig::parse("[solver]\nquad_degree = 12\n"), Err(ConfigError::Value { .. })));
        assert!(matches!(StudyConfig::parse("[levels]\nwidth = 2\n"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(StudyConfig::parse("[mesh]\n"), Err(ConfigError::UnknownSection(_))));
        assert!(matches!(StudyConfig::parse("[geometry]\ninterface = circle 1\n"), Err(ConfigError::Value { .. })));
        let c = StudyConfig::parse("[problem]\nname = power11\nalpha = 2\n").unwrap();
        assert!(matches!(c.build_problem(), Err(ConfigError::Problem(_))));
    }

    #[test]
    fn manufactured_problem() {
        let c = StudyConfig::parse("[problem]\nname = manufactured\nd1 = 10\n").unwrap();
        let (problem, exact) = c.build_problem().unwrap();
        assert!(exact.is_some());
        assert_eq!(problem.diffusion.max(), 10.0);
    }
}

//! Scenario files: a flat, sectioned key-value text format describing one
//! chart (or one immersed surface), a mesh ladder, check list, and constants.
//! No programmability beyond quoted expression strings.

use crate::discretize::BcKind;
use crate::exprlang::{parse, Expr};
use crate::geometry::{Axis, AxisKind, Domain, EndKind, SamplePlan, WeightedManifold};
use crate::geometry::ChartMetric;
use crate::hypersurface::Immersion;
use crate::verify::MeshSpec;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("invalid scenario field `{field}`: {msg}")]
    Validation { field: String, msg: String },
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        col,
        msg: msg.into(),
    }
}

fn verr(field: &str, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        msg: msg.into(),
    }
}

/// Checks a scenario can request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Thm1,
    MaDu,
    Corollary,
    HMinimality,
    Stability,
    Prop25,
    Thm2,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Thm1 => "thm1",
            CheckKind::MaDu => "madu",
            CheckKind::Corollary => "corollary",
            CheckKind::HMinimality => "h_minimality",
            CheckKind::Stability => "stability",
            CheckKind::Prop25 => "prop25",
            CheckKind::Thm2 => "thm2",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "thm1" => CheckKind::Thm1,
            "madu" => CheckKind::MaDu,
            "corollary" => CheckKind::Corollary,
            "h_minimality" => CheckKind::HMinimality,
            "stability" => CheckKind::Stability,
            "prop25" => CheckKind::Prop25,
            "thm2" => CheckKind::Thm2,
            _ => return None,
        })
    }

    pub fn needs_manifold(self) -> bool {
        matches!(self, CheckKind::Thm1 | CheckKind::MaDu | CheckKind::Corollary)
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One requested check with its boundary-condition option.
#[derive(Clone, Copy, Debug)]
pub struct CheckSpec {
    pub kind: CheckKind,
    pub bc: BcKind,
}

/// Free constants referenced by the checks.
#[derive(Clone, Debug, Default)]
pub struct Params {
    pub c: Option<f64>,
    pub m: Option<f64>,
    pub a: Option<f64>,
    /// Optional test function (chart variables) for the identity checks.
    pub f: Option<Expr>,
}

/// Per-check tolerance knobs with conservative defaults.
#[derive(Clone, Debug)]
pub struct Tolerances {
    pub residual: f64,
    pub identity: f64,
    pub stability: f64,
    pub hypothesis: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-10,
            identity: 1e-8,
            stability: 1e-8,
            hypothesis: 1e-9,
        }
    }
}

/// Either a chart of a weighted manifold or an immersed surface.
#[derive(Clone, Debug)]
pub enum Geometry {
    Manifold(WeightedManifold),
    Surface(Immersion),
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub id: String,
    pub geometry: Geometry,
    pub mesh: MeshSpec,
    pub params: Params,
    pub checks: Vec<CheckSpec>,
    pub plan: SamplePlan,
    pub tolerances: Tolerances,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        match &self.geometry {
            Geometry::Manifold(m) => m.dim(),
            Geometry::Surface(_) => 2,
        }
    }

    pub fn manifold(&self) -> Option<&WeightedManifold> {
        match &self.geometry {
            Geometry::Manifold(m) => Some(m),
            Geometry::Surface(_) => None,
        }
    }

    pub fn surface(&self) -> Option<&Immersion> {
        match &self.geometry {
            Geometry::Manifold(_) => None,
            Geometry::Surface(s) => Some(s),
        }
    }
}

// ---------------------------------------------------------------------------
// Raw sectioned key-value layer

struct RawEntry {
    line: usize,
    col: usize,
    key: String,
    value: String,
}

struct RawSection {
    name: String,
    line: usize,
    entries: Vec<RawEntry>,
}

fn split_sections(text: &str) -> Result<Vec<RawSection>, ScenarioError> {
    let mut sections: Vec<RawSection> = vec![RawSection {
        name: String::new(),
        line: 0,
        entries: Vec::new(),
    }];
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            // a `#` inside a quoted expression is part of nothing we accept,
            // so comment stripping only applies outside quotes
            Some(pos) if !raw[..pos].contains('"') => &raw[..pos],
            _ => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                perr(lineno, 1, "section header must look like [name]")
            })?;
            sections.push(RawSection {
                name: name.trim().to_string(),
                line: lineno,
                entries: Vec::new(),
            });
            continue;
        }
        let eq = trimmed.find('=').ok_or_else(|| {
            perr(lineno, 1, format!("expected `key = value`, got `{trimmed}`"))
        })?;
        let key = trimmed[..eq].trim();
        let value = trimmed[eq + 1..].trim();
        if key.is_empty() {
            return Err(perr(lineno, 1, "empty key before `=`"));
        }
        if value.is_empty() {
            return Err(perr(lineno, eq + 2, format!("empty value for key `{key}`")));
        }
        let col = line.find(key).map(|c| c + 1).unwrap_or(1);
        sections.last_mut().unwrap().entries.push(RawEntry {
            line: lineno,
            col,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(sections)
}

struct SectionView<'a> {
    sec: &'a RawSection,
    used: BTreeSet<usize>,
}

impl<'a> SectionView<'a> {
    fn new(sec: &'a RawSection) -> Self {
        SectionView {
            sec,
            used: BTreeSet::new(),
        }
    }

    fn get(&mut self, key: &str) -> Option<&'a RawEntry> {
        for (i, e) in self.sec.entries.iter().enumerate() {
            if e.key == key {
                self.used.insert(i);
                return Some(e);
            }
        }
        None
    }

    fn require(&mut self, key: &str) -> Result<&'a RawEntry, ScenarioError> {
        self.get(key).ok_or_else(|| {
            verr(
                key,
                format!("missing from section [{}]", self.sec.name),
            )
        })
    }

    fn reject_unknown(&self) -> Result<(), ScenarioError> {
        for (i, e) in self.sec.entries.iter().enumerate() {
            if !self.used.contains(&i) {
                return Err(perr(
                    e.line,
                    e.col,
                    format!("unknown key `{}` in section [{}]", e.key, self.sec.name),
                ));
            }
        }
        Ok(())
    }
}

fn parse_f64(e: &RawEntry) -> Result<f64, ScenarioError> {
    e.value
        .parse::<f64>()
        .map_err(|_| perr(e.line, e.col, format!("`{}` is not a number", e.value)))
}

fn parse_usize(e: &RawEntry) -> Result<usize, ScenarioError> {
    e.value
        .parse::<usize>()
        .map_err(|_| perr(e.line, e.col, format!("`{}` is not a nonnegative integer", e.value)))
}

fn parse_usize_list(e: &RawEntry) -> Result<Vec<usize>, ScenarioError> {
    e.value
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| perr(e.line, e.col, format!("`{t}` is not a nonnegative integer")))
        })
        .collect()
}

fn unquote<'a>(e: &'a RawEntry) -> Result<&'a str, ScenarioError> {
    let v = e.value.as_str();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        Ok(&v[1..v.len() - 1])
    } else {
        Err(perr(
            e.line,
            e.col,
            format!("expression for `{}` must be double-quoted", e.key),
        ))
    }
}

fn parse_expr(e: &RawEntry, dim: usize) -> Result<Expr, ScenarioError> {
    let text = unquote(e)?;
    parse(text, dim).map_err(|err| perr(e.line, e.col, format!("in `{}`: {err}", e.key)))
}

fn parse_axis(e: &RawEntry) -> Result<Axis, ScenarioError> {
    let toks: Vec<&str> = e.value.split_whitespace().collect();
    let bad = || {
        perr(
            e.line,
            e.col,
            format!(
                "axis must be `<lo> <hi> periodic` or `<lo> <hi> <lo-end> <hi-end>` \
                 with ends in {{boundary, singular}}, got `{}`",
                e.value
            ),
        )
    };
    let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
    let end = |t: &str| match t {
        "boundary" => Ok(EndKind::Boundary),
        "singular" => Ok(EndKind::Singular),
        _ => Err(bad()),
    };
    let kind = match toks.as_slice() {
        [_, _, "periodic"] => AxisKind::Periodic,
        [_, _, lo, hi] => AxisKind::Ends(end(lo)?, end(hi)?),
        _ => return Err(bad()),
    };
    let lo = num(toks[0])?;
    let hi = num(toks[1])?;
    if !(hi > lo) {
        return Err(perr(e.line, e.col, format!("axis needs lo < hi, got {lo} {hi}")));
    }
    Ok(Axis { lo, hi, kind })
}

fn parse_sign(e: &RawEntry) -> Result<f64, ScenarioError> {
    match e.value.as_str() {
        "1" | "+1" => Ok(1.0),
        "-1" => Ok(-1.0),
        _ => Err(perr(e.line, e.col, format!("`{}` must be 1 or -1", e.value))),
    }
}

// ---------------------------------------------------------------------------
// Section assembly

fn axes_from(view: &mut SectionView) -> Result<Vec<Axis>, ScenarioError> {
    let mut axes = Vec::new();
    for key in ["axis1", "axis2"] {
        if let Some(e) = view.get(key) {
            if key == "axis2" && axes.is_empty() {
                return Err(perr(e.line, e.col, "axis2 given without axis1"));
            }
            axes.push(parse_axis(e)?);
        }
    }
    if axes.is_empty() {
        return Err(verr("axis1", "at least one axis is required"));
    }
    Ok(axes)
}

fn manifold_from(sec: &RawSection) -> Result<WeightedManifold, ScenarioError> {
    let mut view = SectionView::new(sec);
    let axes = axes_from(&mut view)?;
    let dim = axes.len();
    let metric = if dim == 1 {
        let g11 = parse_expr(view.require("g11")?, 1)?;
        ChartMetric::new_1d(g11)
    } else {
        let g11 = parse_expr(view.require("g11")?, 2)?;
        let g12 = parse_expr(view.require("g12")?, 2)?;
        let g22 = parse_expr(view.require("g22")?, 2)?;
        ChartMetric::new_2d(g11, g12, g22)
    };
    let weight = parse_expr(view.require("weight")?, dim)?;
    view.reject_unknown()?;
    let man = WeightedManifold {
        metric,
        weight,
        domain: Domain { axes },
    };
    man.validate()
        .map_err(|e| verr("metric", format!("chart fails validation: {e}")))?;
    Ok(man)
}

fn immersion_from(sec: &RawSection) -> Result<Immersion, ScenarioError> {
    let mut view = SectionView::new(sec);
    let axes = axes_from(&mut view)?;
    if axes.len() != 2 {
        return Err(verr("axis2", "an immersed surface chart needs two axes"));
    }
    let map = [
        parse_expr(view.require("map1")?, 2)?,
        parse_expr(view.require("map2")?, 2)?,
        parse_expr(view.require("map3")?, 2)?,
    ];
    let ambient_weight = parse_expr(view.require("ambient_weight")?, 3)?;
    let orientation = match view.get("orientation") {
        Some(e) => parse_sign(e)?,
        None => 1.0,
    };
    let shape_sign = match view.get("shape_sign") {
        Some(e) => parse_sign(e)?,
        None => 1.0,
    };
    view.reject_unknown()?;
    Ok(Immersion {
        domain: Domain { axes },
        map,
        ambient_weight,
        orientation,
        shape_sign,
    })
}

fn checks_from(sec: &RawSection) -> Result<Vec<CheckSpec>, ScenarioError> {
    let mut checks = Vec::new();
    for e in &sec.entries {
        let kind = CheckKind::from_name(&e.key)
            .ok_or_else(|| perr(e.line, e.col, format!("unknown check `{}`", e.key)))?;
        let bc = match (kind.needs_manifold(), e.value.as_str()) {
            (true, "dirichlet") => BcKind::Dirichlet,
            (true, "neumann") => BcKind::Neumann,
            (true, other) => {
                return Err(perr(
                    e.line,
                    e.col,
                    format!("check `{}` needs `dirichlet` or `neumann`, got `{other}`", e.key),
                ))
            }
            (false, "default") => BcKind::Dirichlet,
            (false, other) => {
                return Err(perr(
                    e.line,
                    e.col,
                    format!("check `{}` takes only `default`, got `{other}`", e.key),
                ))
            }
        };
        if checks.iter().any(|c: &CheckSpec| c.kind == kind) {
            return Err(perr(e.line, e.col, format!("check `{}` listed twice", e.key)));
        }
        checks.push(CheckSpec { kind, bc });
    }
    if checks.is_empty() {
        return Err(verr("checks", "at least one check is required"));
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Public entry points

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let sections = split_sections(text)?;

    // preamble: the id
    let mut id = None;
    for e in &sections[0].entries {
        match e.key.as_str() {
            "id" => id = Some((e.line, e.col, e.value.clone())),
            other => {
                return Err(perr(e.line, e.col, format!("unexpected key `{other}` before any section")))
            }
        }
    }
    let (idl, idc, id) = id.ok_or_else(|| verr("id", "missing `id = <name>` line"))?;
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    {
        return Err(perr(idl, idc, format!("id `{id}` must be lowercase [a-z0-9_]")));
    }

    let mut manifold_sec = None;
    let mut immersion_sec = None;
    let mut mesh_sec = None;
    let mut params_sec = None;
    let mut checks_sec = None;
    let mut plan_sec = None;
    let mut tol_sec = None;
    for sec in &sections[1..] {
        let slot = match sec.name.as_str() {
            "manifold" => &mut manifold_sec,
            "immersion" => &mut immersion_sec,
            "mesh" => &mut mesh_sec,
            "params" => &mut params_sec,
            "checks" => &mut checks_sec,
            "plan" => &mut plan_sec,
            "tolerances" => &mut tol_sec,
            other => return Err(perr(sec.line, 1, format!("unknown section [{other}]"))),
        };
        if slot.is_some() {
            return Err(perr(sec.line, 1, format!("duplicate section [{}]", sec.name)));
        }
        *slot = Some(sec);
    }

    let geometry = match (manifold_sec, immersion_sec) {
        (Some(m), None) => Geometry::Manifold(manifold_from(m)?),
        (None, Some(s)) => Geometry::Surface(immersion_from(s)?),
        (Some(_), Some(_)) => {
            return Err(verr("manifold", "give exactly one of [manifold] or [immersion], not both"))
        }
        (None, None) => return Err(verr("manifold", "one of [manifold] or [immersion] is required")),
    };
    let dim = match &geometry {
        Geometry::Manifold(m) => m.dim(),
        Geometry::Surface(_) => 2,
    };

    let mesh = {
        let sec = mesh_sec.ok_or_else(|| verr("mesh", "section [mesh] is required"))?;
        let mut view = SectionView::new(sec);
        let cells = parse_usize_list(view.require("cells")?)?;
        if cells.len() != dim {
            return Err(verr(
                "cells",
                format!("needs {dim} per-axis counts, got {}", cells.len()),
            ));
        }
        if cells.iter().any(|&c| c < 2) {
            return Err(verr("cells", "every axis needs at least 2 cells"));
        }
        let levels = parse_usize(view.require("levels")?)?;
        if levels < 2 {
            return Err(verr("levels", "the refinement ladder needs at least 2 levels"));
        }
        let quad_order = match view.get("quad_order") {
            Some(e) => {
                let q = parse_usize(e)?;
                if !(1..=6).contains(&q) {
                    return Err(verr("quad_order", format!("must be 1..=6, got {q}")));
                }
                q
            }
            None => 4,
        };
        view.reject_unknown()?;
        MeshSpec {
            base_cells: cells,
            levels,
            quad_order,
        }
    };

    let mut params = Params::default();
    if let Some(sec) = params_sec {
        let mut view = SectionView::new(sec);
        if let Some(e) = view.get("c") {
            params.c = Some(parse_f64(e)?);
        }
        if let Some(e) = view.get("m") {
            params.m = Some(parse_f64(e)?);
        }
        if let Some(e) = view.get("a") {
            params.a = Some(parse_f64(e)?);
        }
        if let Some(e) = view.get("f") {
            params.f = Some(parse_expr(e, dim)?);
        }
        view.reject_unknown()?;
    }

    let checks = checks_from(checks_sec.ok_or_else(|| verr("checks", "section [checks] is required"))?)?;

    let plan = match plan_sec {
        Some(sec) => {
            let mut view = SectionView::new(sec);
            let counts = parse_usize_list(view.require("counts")?)?;
            if counts.len() != dim {
                return Err(verr(
                    "counts",
                    format!("needs {dim} per-axis counts, got {}", counts.len()),
                ));
            }
            let inset = parse_f64(view.require("inset")?)?;
            if !(0.0..0.5).contains(&inset) {
                return Err(verr("inset", format!("must lie in [0, 0.5), got {inset}")));
            }
            view.reject_unknown()?;
            SamplePlan::grid(counts, inset)
        }
        None => SamplePlan::grid(vec![20; dim], 0.02),
    };

    let mut tolerances = Tolerances::default();
    if let Some(sec) = tol_sec {
        let mut view = SectionView::new(sec);
        for (key, slot) in [
            ("residual", &mut tolerances.residual),
            ("identity", &mut tolerances.identity),
            ("stability", &mut tolerances.stability),
            ("hypothesis", &mut tolerances.hypothesis),
        ] {
            if let Some(e) = view.get(key) {
                let v = parse_f64(e)?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(verr(key, format!("tolerance must be positive, got {v}")));
                }
                *slot = v;
            }
        }
        view.reject_unknown()?;
    }

    // cross-field validation
    for chk in &checks {
        let surface_ok = chk.kind.needs_manifold() == matches!(geometry, Geometry::Manifold(_));
        if !surface_ok {
            let want = if chk.kind.needs_manifold() { "[manifold]" } else { "[immersion]" };
            return Err(verr(
                chk.kind.name(),
                format!("check `{}` needs a {want} scenario", chk.kind.name()),
            ));
        }
        match chk.kind {
            CheckKind::Thm1 | CheckKind::Thm2 => {
                let c = params.c.ok_or_else(|| verr("c", "required by thm1/thm2"))?;
                if !(c > 0.0) {
                    return Err(verr("c", format!("must be positive, got {c}")));
                }
            }
            CheckKind::MaDu => {
                let m = params.m.ok_or_else(|| verr("m", "required by madu"))?;
                let a = params.a.ok_or_else(|| verr("a", "required by madu"))?;
                if m <= dim as f64 {
                    return Err(verr("m", format!("madu needs m > n = {dim}, got {m}")));
                }
                if !(a > 0.0) {
                    return Err(verr("a", format!("madu needs a > 0, got {a}")));
                }
            }
            _ => {}
        }
    }

    Ok(Scenario {
        id,
        geometry,
        mesh,
        params,
        checks,
        plan,
        tolerances,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

// ---------------------------------------------------------------------------
// Shipped catalog

pub const CATALOG: [(&str, &str); 8] = [
    ("flat_interval", include_str!("../scenarios/flat_interval.scn")),
    ("gaussian_interval", include_str!("../scenarios/gaussian_interval.scn")),
    ("gaussian_disk", include_str!("../scenarios/gaussian_disk.scn")),
    ("hemisphere_dirichlet", include_str!("../scenarios/hemisphere_dirichlet.scn")),
    ("sphere_band_neumann", include_str!("../scenarios/sphere_band_neumann.scn")),
    ("shrinker_sphere", include_str!("../scenarios/shrinker_sphere.scn")),
    ("gaussian_plane_disk", include_str!("../scenarios/gaussian_plane_disk.scn")),
    ("cylinder_segment", include_str!("../scenarios/cylinder_segment.scn")),
];

/// Parse one shipped scenario by name.
pub fn catalog_scenario(name: &str) -> Option<Scenario> {
    CATALOG
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text).expect("shipped scenario must parse"))
}

/// All shipped scenarios in catalog order.
pub fn catalog() -> Vec<Scenario> {
    CATALOG
        .iter()
        .map(|(_, text)| parse_scenario(text).expect("shipped scenario must parse"))
        .collect()
}

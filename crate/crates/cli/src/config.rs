//! Scenario config parsing: flat `[section]` + `key = value` text.
//!
//! Dimensional values carry a mandatory unit suffix (`dt = 2.5e-3 s`);
//! a bare number where a unit is expected is an error, as is any key the
//! experiment does not declare. Errors carry the offending line and field.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}, field '{}': {}", self.line, field, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(line: usize, field: Option<&str>, message: impl Into<String>) -> Result<T> {
    Err(ConfigError {
        line,
        field: field.map(str::to_owned),
        message: message.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    GamblerRuin,
    OffdiagDecay,
    NonmarkovCompare,
    CslRates,
    GravityCompare,
    KernelScan,
    ParameterReport,
}

impl Experiment {
    pub fn from_word(w: &str) -> Option<Experiment> {
        Some(match w {
            "gambler_ruin" => Experiment::GamblerRuin,
            "offdiag_decay" => Experiment::OffdiagDecay,
            "nonmarkov_compare" => Experiment::NonmarkovCompare,
            "csl_rates" => Experiment::CslRates,
            "gravity_compare" => Experiment::GravityCompare,
            "kernel_scan" => Experiment::KernelScan,
            "parameter_report" => Experiment::ParameterReport,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::GamblerRuin => "gambler_ruin",
            Experiment::OffdiagDecay => "offdiag_decay",
            Experiment::NonmarkovCompare => "nonmarkov_compare",
            Experiment::CslRates => "csl_rates",
            Experiment::GravityCompare => "gravity_compare",
            Experiment::KernelScan => "kernel_scan",
            Experiment::ParameterReport => "parameter_report",
        }
    }

    fn schema(&self) -> &'static [KeySpec] {
        match self {
            Experiment::GamblerRuin => GAMBLER_RUIN_KEYS,
            Experiment::OffdiagDecay => OFFDIAG_DECAY_KEYS,
            Experiment::NonmarkovCompare => NONMARKOV_COMPARE_KEYS,
            Experiment::CslRates => CSL_RATES_KEYS,
            Experiment::GravityCompare => GRAVITY_COMPARE_KEYS,
            Experiment::KernelScan => KERNEL_SCAN_KEYS,
            Experiment::ParameterReport => &[],
        }
    }
}

const GAMBLER_RUIN_KEYS: &[KeySpec] = &[
    KeySpec::req("amp0", Kind::Bare),
    KeySpec::req("amp1", Kind::Bare),
    KeySpec::req("lambda", Kind::Unit("/s")),
    KeySpec::req("t_final", Kind::Unit("s")),
    KeySpec::req("dt", Kind::Unit("s")),
    KeySpec::opt("a0", Kind::Bare),
    KeySpec::opt("a1", Kind::Bare),
    KeySpec::opt("trajectories", Kind::Count),
    KeySpec::opt("engine", Kind::Word),
];

const OFFDIAG_DECAY_KEYS: &[KeySpec] = &[
    KeySpec::req("amp0", Kind::Bare),
    KeySpec::req("amp1", Kind::Bare),
    KeySpec::req("lambda", Kind::Unit("/s")),
    KeySpec::req("t_final", Kind::Unit("s")),
    KeySpec::req("dt", Kind::Unit("s")),
    KeySpec::opt("a0", Kind::Bare),
    KeySpec::opt("a1", Kind::Bare),
    KeySpec::opt("trajectories", Kind::Count),
    KeySpec::opt("time_points", Kind::Count),
];

const NONMARKOV_COMPARE_KEYS: &[KeySpec] = &[
    KeySpec::req("lambda", Kind::Unit("/s")),
    KeySpec::req("alpha", Kind::Unit("/s")),
    KeySpec::req("t_final", Kind::Unit("s")),
    KeySpec::opt("a0", Kind::Bare),
    KeySpec::opt("a1", Kind::Bare),
    KeySpec::opt("points", Kind::Count),
];

const CSL_RATES_KEYS: &[KeySpec] = &[
    KeySpec::opt("lambda", Kind::Unit("/s")),
    KeySpec::opt("a", Kind::Unit("cm")),
    KeySpec::opt("n_particles", Kind::Bare),
    KeySpec::opt("mass", Kind::Unit("g")),
    KeySpec::opt("clump_n", Kind::Count),
    KeySpec::opt("clump_separation", Kind::Unit("cm")),
    KeySpec::opt("cube_side", Kind::Unit("cm")),
    KeySpec::opt("rho", Kind::Unit("/cm3")),
    KeySpec::opt("germanium_limit", Kind::Bare),
];

const GRAVITY_COMPARE_KEYS: &[KeySpec] = &[
    KeySpec::req("spacing", Kind::Unit("cm")),
    KeySpec::req("extent", Kind::UnitList("cm", 6)),
    KeySpec::req("dist1", Kind::Primitive),
    KeySpec::req("dist2", Kind::Primitive),
    KeySpec::opt("a", Kind::Unit("cm")),
    KeySpec::opt("mode", Kind::Word),
];

const KERNEL_SCAN_KEYS: &[KeySpec] = &[
    KeySpec::req("kind", Kind::Word),
    KeySpec::req("a", Kind::Unit("cm")),
    KeySpec::req("from", Kind::Unit("cm")),
    KeySpec::req("to", Kind::Unit("cm")),
    KeySpec::opt("points", Kind::Count),
];

#[derive(Clone, Copy, Debug)]
enum Kind {
    /// Dimensionless real.
    Bare,
    /// Nonnegative integer (scientific notation accepted if integral).
    Count,
    /// Identifier-like word.
    Word,
    /// Real with a mandatory exact unit token.
    Unit(&'static str),
    /// Fixed-length list of reals with one trailing unit token.
    UnitList(&'static str, usize),
    /// Mass-distribution primitive; the key may repeat.
    Primitive,
}

struct KeySpec {
    name: &'static str,
    kind: Kind,
    required: bool,
}

impl KeySpec {
    const fn req(name: &'static str, kind: Kind) -> KeySpec {
        KeySpec {
            name,
            kind,
            required: true,
        }
    }
    const fn opt(name: &'static str, kind: Kind) -> KeySpec {
        KeySpec {
            name,
            kind,
            required: false,
        }
    }
}

/// Keys every scenario accepts on top of its experiment schema.
const COMMON_KEYS: [KeySpec; 3] = [
    KeySpec::req("experiment", Kind::Word),
    KeySpec::opt("seed", Kind::Count),
    KeySpec::opt("output_dir", Kind::Word),
];

/// Whether a primitive's amount/density is grams or particle count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassUnit {
    Grams,
    Count,
}

/// One parsed mass-distribution primitive.
#[derive(Clone, Debug, PartialEq)]
pub enum DistPrimitive {
    /// point x y z cm <amount> (g|n)
    Point {
        pos: [f64; 3],
        amount: f64,
        unit: MassUnit,
    },
    /// box x0 y0 z0 x1 y1 z1 cm <density> (g/cm3|n/cm3)
    Box {
        lo: [f64; 3],
        hi: [f64; 3],
        density: f64,
        unit: MassUnit,
    },
    /// sphere cx cy cz r cm <density> (g/cm3|n/cm3)
    Sphere {
        center: [f64; 3],
        radius: f64,
        density: f64,
        unit: MassUnit,
    },
    /// csv <path> (g|n): rows x,y,z,value in cm
    Csv { path: String, unit: MassUnit },
}

impl DistPrimitive {
    pub fn unit(&self) -> MassUnit {
        match self {
            DistPrimitive::Point { unit, .. }
            | DistPrimitive::Box { unit, .. }
            | DistPrimitive::Sphere { unit, .. }
            | DistPrimitive::Csv { unit, .. } => *unit,
        }
    }
}

/// A typed value from the config.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Integer(u64),
    Word(String),
    Primitives(Vec<DistPrimitive>),
    RealList(Vec<f64>),
}

/// One `[section]` of the config, validated against its experiment schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: Option<String>,
    pub values: BTreeMap<String, Value>,
    /// Raw value strings as written, one entry per `key =` line so the echo
    /// reparses to the same scenario. Only primitive keys have several.
    pub raw: BTreeMap<String, Vec<String>>,
}

impl Scenario {
    pub fn real(&self, key: &str, default: f64) -> f64 {
        match self.values.get(key) {
            Some(Value::Real(v)) => *v,
            _ => default,
        }
    }

    pub fn count(&self, key: &str, default: u64) -> u64 {
        match self.values.get(key) {
            Some(Value::Integer(v)) => *v,
            _ => default,
        }
    }

    pub fn word(&self, key: &str, default: &str) -> String {
        match self.values.get(key) {
            Some(Value::Word(w)) => w.clone(),
            _ => default.to_owned(),
        }
    }

    pub fn real_list(&self, key: &str) -> Option<&[f64]> {
        match self.values.get(key) {
            Some(Value::RealList(v)) => Some(v),
            _ => None,
        }
    }

    pub fn primitives(&self, key: &str) -> &[DistPrimitive] {
        match self.values.get(key) {
            Some(Value::Primitives(p)) => p,
            _ => &[],
        }
    }

    /// Reconstruct this scenario's config section from the raw echo;
    /// reparsing the result yields an equivalent scenario.
    pub fn echo_section(&self) -> String {
        let mut s = format!("[{}]\n", self.name);
        for (k, vals) in &self.raw {
            for v in vals {
                s.push_str(k);
                s.push_str(" = ");
                s.push_str(v);
                s.push('\n');
            }
        }
        s
    }
}

fn parse_real(tok: &str, line: usize, field: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => err(
            line,
            Some(field),
            format!("expected a finite number, got '{tok}'"),
        ),
    }
}

fn parse_count(raw: &str, line: usize, field: &str) -> Result<u64> {
    let v = parse_real(raw, line, field)?;
    if v < 0.0 || v.fract() != 0.0 || v > 2f64.powi(53) {
        return err(
            line,
            Some(field),
            format!("expected a nonnegative integer, got '{raw}'"),
        );
    }
    Ok(v as u64)
}

fn parse_unit_value(raw: &str, unit: &str, line: usize, field: &str) -> Result<f64> {
    let toks: Vec<&str> = raw.split_whitespace().collect();
    match toks.as_slice() {
        [num, u] if *u == unit => parse_real(num, line, field),
        [_num] => err(
            line,
            Some(field),
            format!("dimensional quantity needs a unit suffix: expected '<value> {unit}'"),
        ),
        _ => err(
            line,
            Some(field),
            format!("expected '<value> {unit}', got '{raw}'"),
        ),
    }
}

fn parse_unit_list(raw: &str, unit: &str, n: usize, line: usize, field: &str) -> Result<Vec<f64>> {
    let toks: Vec<&str> = raw.split_whitespace().collect();
    if toks.len() != n + 1 || toks[n] != unit {
        return err(
            line,
            Some(field),
            format!("expected {n} values followed by '{unit}'"),
        );
    }
    toks[..n]
        .iter()
        .map(|t| parse_real(t, line, field))
        .collect()
}

fn parse_vec3(toks: &[&str], line: usize, field: &str) -> Result<[f64; 3]> {
    Ok([
        parse_real(toks[0], line, field)?,
        parse_real(toks[1], line, field)?,
        parse_real(toks[2], line, field)?,
    ])
}

fn amount_unit(tok: &str) -> Option<MassUnit> {
    match tok {
        "g" => Some(MassUnit::Grams),
        "n" => Some(MassUnit::Count),
        _ => None,
    }
}

fn density_unit(tok: &str) -> Option<MassUnit> {
    match tok {
        "g/cm3" => Some(MassUnit::Grams),
        "n/cm3" => Some(MassUnit::Count),
        _ => None,
    }
}

fn parse_primitive(raw: &str, line: usize, field: &str) -> Result<DistPrimitive> {
    let toks: Vec<&str> = raw.split_whitespace().collect();
    match toks.as_slice() {
        ["point", x, y, z, "cm", amount, u] if amount_unit(u).is_some() => {
            Ok(DistPrimitive::Point {
                pos: parse_vec3(&[x, y, z], line, field)?,
                amount: parse_real(amount, line, field)?,
                unit: amount_unit(u).unwrap(),
            })
        }
        ["box", x0, y0, z0, x1, y1, z1, "cm", density, u] if density_unit(u).is_some() => {
            Ok(DistPrimitive::Box {
                lo: parse_vec3(&[x0, y0, z0], line, field)?,
                hi: parse_vec3(&[x1, y1, z1], line, field)?,
                density: parse_real(density, line, field)?,
                unit: density_unit(u).unwrap(),
            })
        }
        ["sphere", cx, cy, cz, r, "cm", density, u] if density_unit(u).is_some() => {
            Ok(DistPrimitive::Sphere {
                center: parse_vec3(&[cx, cy, cz], line, field)?,
                radius: parse_real(r, line, field)?,
                density: parse_real(density, line, field)?,
                unit: density_unit(u).unwrap(),
            })
        }
        ["csv", path, u] if amount_unit(u).is_some() => Ok(DistPrimitive::Csv {
            path: (*path).to_owned(),
            unit: amount_unit(u).unwrap(),
        }),
        _ => err(
            line,
            Some(field),
            "expected 'point x y z cm v (g|n)', 'box x0 y0 z0 x1 y1 z1 cm d (g/cm3|n/cm3)', \
             'sphere cx cy cz r cm d (g/cm3|n/cm3)' or 'csv path (g|n)'",
        ),
    }
}

struct RawSection {
    name: String,
    line: usize,
    /// (key, raw value, line), in file order; keys may repeat only for
    /// primitive-kind fields.
    entries: Vec<(String, String, usize)>,
}

fn split_sections(text: &str) -> Result<Vec<RawSection>> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = match name.strip_suffix(']') {
                Some(n) => n.trim(),
                None => return err(line_no, None, "unterminated section header"),
            };
            if name.is_empty() {
                return err(line_no, None, "empty section name");
            }
            if sections.iter().any(|s| s.name == name) {
                return err(line_no, None, format!("duplicate section '{name}'"));
            }
            sections.push(RawSection {
                name: name.to_owned(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => return err(line_no, None, "expected 'key = value' or '[section]'"),
        };
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return err(line_no, None, format!("bad key '{key}'"));
        }
        if value.is_empty() {
            return err(line_no, Some(key), "empty value");
        }
        match sections.last_mut() {
            Some(s) => s.entries.push((key.to_owned(), value.to_owned(), line_no)),
            None => return err(line_no, None, "key before any [section] header"),
        }
    }
    Ok(sections)
}

fn build_scenario(section: RawSection) -> Result<Scenario> {
    let exp_entry = section
        .entries
        .iter()
        .find(|(k, _, _)| k == "experiment")
        .ok_or_else(|| ConfigError {
            line: section.line,
            field: Some("experiment".into()),
            message: format!("section '{}' does not name an experiment", section.name),
        })?;
    let experiment = Experiment::from_word(&exp_entry.1).ok_or_else(|| ConfigError {
        line: exp_entry.2,
        field: Some("experiment".into()),
        message: format!(
            "unknown experiment '{}'; expected one of gambler_ruin, offdiag_decay, \
             nonmarkov_compare, csl_rates, gravity_compare, kernel_scan, parameter_report",
            exp_entry.1
        ),
    })?;
    let schema = experiment.schema();
    let spec_of = |key: &str| -> Option<&KeySpec> {
        COMMON_KEYS
            .iter()
            .chain(schema.iter())
            .find(|s| s.name == key)
    };

    let mut values: BTreeMap<String, Value> = BTreeMap::new();
    let mut raw: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (key, value, line_no) in &section.entries {
        let spec = match spec_of(key) {
            Some(s) => s,
            None => {
                return err(
                    *line_no,
                    Some(key),
                    format!("unknown key for experiment '{}'", experiment.name()),
                )
            }
        };
        let is_primitive = matches!(spec.kind, Kind::Primitive);
        if values.contains_key(key) && !is_primitive {
            return err(*line_no, Some(key), "duplicate key");
        }
        let parsed = match spec.kind {
            Kind::Bare => Value::Real(parse_real(value, *line_no, key)?),
            Kind::Count => Value::Integer(parse_count(value, *line_no, key)?),
            Kind::Word => {
                if value.split_whitespace().count() != 1 {
                    return err(
                        *line_no,
                        Some(key),
                        format!("expected a single word, got '{value}'"),
                    );
                }
                Value::Word(value.clone())
            }
            Kind::Unit(u) => Value::Real(parse_unit_value(value, u, *line_no, key)?),
            Kind::UnitList(u, n) => Value::RealList(parse_unit_list(value, u, n, *line_no, key)?),
            Kind::Primitive => {
                let prim = parse_primitive(value, *line_no, key)?;
                match values.get_mut(key) {
                    Some(Value::Primitives(list)) => {
                        list.push(prim);
                        raw.get_mut(key).unwrap().push(value.clone());
                        continue;
                    }
                    _ => Value::Primitives(vec![prim]),
                }
            }
        };
        values.insert(key.clone(), parsed);
        raw.insert(key.clone(), vec![value.clone()]);
    }

    for spec in COMMON_KEYS.iter().chain(schema.iter()) {
        if spec.required && !values.contains_key(spec.name) {
            return err(
                section.line,
                Some(spec.name),
                format!("missing required key for '{}'", experiment.name()),
            );
        }
    }

    let seed = match values.get("seed") {
        Some(Value::Integer(s)) => *s,
        _ => 0,
    };
    let output_dir = match values.get("output_dir") {
        Some(Value::Word(w)) => Some(w.clone()),
        _ => None,
    };
    Ok(Scenario {
        name: section.name,
        experiment,
        seed,
        output_dir,
        values,
        raw,
    })
}

/// Parse a whole config into scenarios, preserving file order.
pub fn parse_config(text: &str) -> Result<Vec<Scenario>> {
    split_sections(text)?
        .into_iter()
        .map(build_scenario)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_gambler_section_parses() {
        let text = "\
[demo]
experiment = gambler_ruin
amp0 = 0.6
amp1 = 0.8
lambda = 1.0 /s
t_final = 10 s
dt = 2.5e-3 s
";
        let scenarios = parse_config(text).unwrap();
        assert_eq!(scenarios.len(), 1);
        let s = &scenarios[0];
        assert_eq!(s.experiment, Experiment::GamblerRuin);
        assert_eq!(s.real("amp0", 0.0), 0.6);
        assert_eq!(s.real("t_final", 0.0), 10.0);
        assert_eq!(s.seed, 0);
        assert_eq!(s.count("trajectories", 10_000), 10_000);
    }

    #[test]
    fn missing_unit_is_an_error_with_position() {
        let text = "[x]\nexperiment = gambler_ruin\namp0 = 0.6\namp1 = 0.8\nlambda = 1.0\nt_final = 10 s\ndt = 1e-3 s\n";
        let e = parse_config(text).unwrap_err();
        assert_eq!(e.line, 5);
        assert_eq!(e.field.as_deref(), Some("lambda"));
        assert!(e.message.contains("unit"));
    }

    #[test]
    fn unknown_key_rejected_strictly() {
        let text = "[x]\nexperiment = parameter_report\nbogus = 3\n";
        let e = parse_config(text).unwrap_err();
        assert_eq!(e.line, 3);
        assert_eq!(e.field.as_deref(), Some("bogus"));
    }

    #[test]
    fn wrong_unit_and_duplicates_rejected() {
        let bad_unit = "[x]\nexperiment = kernel_scan\nkind = spacelike\na = 1e-5 s\nfrom = 1e-5 cm\nto = 4e-5 cm\n";
        assert!(parse_config(bad_unit).is_err());
        let dup = "[x]\nexperiment = parameter_report\nseed = 1\nseed = 2\n";
        let e = parse_config(dup).unwrap_err();
        assert_eq!(e.line, 4);
        let dup_section =
            "[x]\nexperiment = parameter_report\n[x]\nexperiment = parameter_report\n";
        assert!(parse_config(dup_section).is_err());
    }

    #[test]
    fn primitives_accumulate_and_validate() {
        let text = "\
[g]
experiment = gravity_compare
spacing = 5e-6 cm
extent = -6e-5 6e-5 -6e-5 6e-5 -6e-5 6e-5 cm
mode = mass
dist1 = point 0 0 0 cm 1e-18 g
dist1 = sphere 2e-5 0 0 1e-5 cm 1.0 g/cm3
dist2 = box -1e-5 -1e-5 -1e-5 1e-5 1e-5 1e-5 cm 0.5 g/cm3
";
        let s = &parse_config(text).unwrap()[0];
        assert_eq!(s.primitives("dist1").len(), 2);
        assert_eq!(s.primitives("dist2").len(), 1);
        assert_eq!(s.real_list("extent").unwrap().len(), 6);
        let bad = "[g]\nexperiment = gravity_compare\nspacing = 5e-6 cm\nextent = 0 1 0 1 0 1 cm\ndist1 = point 0 0 0 1e-18 g\ndist2 = point 0 0 0 cm 1e-18 g\n";
        let e = parse_config(bad).unwrap_err();
        assert_eq!(e.line, 5); // missing 'cm' token
    }

    #[test]
    fn comments_blanks_and_order_are_tolerated() {
        let text = "\
# top comment
[first]
experiment = parameter_report   # trailing comment
seed = 7

[second]
experiment = csl_rates
n_particles = 1e24
";
        let scenarios = parse_config(text).unwrap();
        assert_eq!(scenarios.len(), 2);
        assert_eq!(scenarios[0].seed, 7);
        assert_eq!(scenarios[1].real("n_particles", 0.0), 1e24);
    }

    #[test]
    fn empty_config_yields_no_scenarios() {
        assert!(parse_config("").unwrap().is_empty());
        assert!(parse_config("# only comments\n\n").unwrap().is_empty());
    }
}

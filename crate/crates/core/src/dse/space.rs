use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::Deserialize;

use super::objective::{Direction, ObjectiveKind, ObjectiveSpec};
use super::DseError;

/// Values taken by one swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepValues {
    Range { min: f64, max: f64, step: f64 },
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSweep {
    pub key: String,
    pub values: SweepValues,
}

impl ParameterSweep {
    pub fn range(key: impl Into<String>, min: f64, max: f64, step: f64) -> Self {
        ParameterSweep {
            key: key.into(),
            values: SweepValues::Range { min, max, step },
        }
    }

    pub fn list(key: impl Into<String>, values: Vec<f64>) -> Self {
        ParameterSweep {
            key: key.into(),
            values: SweepValues::List(values),
        }
    }

    /// `min, min + step, ...` up to `max` (with a tolerance of 1e-9 steps),
    /// or the list as given.
    pub fn expand(&self) -> Vec<f64> {
        match &self.values {
            SweepValues::List(v) => v.clone(),
            SweepValues::Range { min, max, step } => {
                let limit = max + 1e-9 * step;
                let mut out = Vec::new();
                let mut i = 0u64;
                loop {
                    let v = min + i as f64 * step;
                    if v > limit {
                        break;
                    }
                    out.push(v);
                    i += 1;
                }
                out
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match &self.values {
            SweepValues::List(v) if v.is_empty() => Err(format!("sweep `{}` has no values", self.key)),
            SweepValues::List(v) if v.iter().any(|x| !x.is_finite()) => {
                Err(format!("sweep `{}` has a non-finite value", self.key))
            }
            SweepValues::List(_) => Ok(()),
            SweepValues::Range { min, max, step } => {
                if !(min.is_finite() && max.is_finite() && step.is_finite()) {
                    Err(format!("sweep `{}` has a non-finite bound", self.key))
                } else if *step <= 0.0 {
                    Err(format!("sweep `{}` needs a positive step", self.key))
                } else if min > max {
                    Err(format!("sweep `{}` has min > max", self.key))
                } else if (max - min) / step > 1e7 {
                    Err(format!("sweep `{}` has too many values", self.key))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Key(String),
    Literal(f64),
}

impl Term {
    fn parse(s: &str) -> Result<Term, String> {
        if s.is_empty() {
            return Err("missing operand".into());
        }
        if let Ok(v) = s.parse::<f64>() {
            return if v.is_finite() {
                Ok(Term::Literal(v))
            } else {
                Err(format!("`{s}` is not a finite number"))
            };
        }
        match s.split_once('.') {
            Some((a, b)) if crate::fmu::is_identifier(a) && crate::fmu::is_identifier(b) => {
                Ok(Term::Key(s.to_string()))
            }
            _ => Err(format!("`{s}` is neither a number nor an `instance.variable` key")),
        }
    }

    fn value(&self, assignment: &IndexMap<String, f64>) -> Option<f64> {
        match self {
            Term::Key(k) => assignment.get(k).copied(),
            Term::Literal(v) => Some(*v),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Key(k) => f.write_str(k),
            Term::Literal(v) => write!(f, "{v:?}"),
        }
    }
}

/// `term op term`, where a term is a parameter key or a number.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub lhs: Term,
    pub op: CmpOp,
    pub rhs: Term,
}

impl FromStr for Constraint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let at = s
            .find(['<', '>', '=', '!'])
            .ok_or_else(|| format!("constraint `{s}` has no comparison operator"))?;
        let rest = &s[at..];
        let (op, len) = match rest.as_bytes() {
            [b'<', b'=', ..] => (CmpOp::Le, 2),
            [b'>', b'=', ..] => (CmpOp::Ge, 2),
            [b'=', b'=', ..] => (CmpOp::Eq, 2),
            [b'!', b'=', ..] => (CmpOp::Ne, 2),
            [b'<', ..] => (CmpOp::Lt, 1),
            [b'>', ..] => (CmpOp::Gt, 1),
            _ => return Err(format!("constraint `{s}`: unknown operator")),
        };
        let lhs = s[..at].trim();
        let rhs = s[at + len..].trim();
        if rhs.contains(['<', '>', '=', '!']) {
            return Err(format!("constraint `{s}`: expected exactly one comparison"));
        }
        let wrap = |e: String| format!("constraint `{s}`: {e}");
        Ok(Constraint {
            lhs: Term::parse(lhs).map_err(wrap)?,
            op,
            rhs: Term::parse(rhs).map_err(wrap)?,
        })
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

impl Constraint {
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        [&self.lhs, &self.rhs].into_iter().filter_map(|t| match t {
            Term::Key(k) => Some(k.as_str()),
            Term::Literal(_) => None,
        })
    }

    /// Keys absent from the assignment make the constraint fail.
    pub fn holds(&self, assignment: &IndexMap<String, f64>) -> bool {
        match (self.lhs.value(assignment), self.rhs.value(assignment)) {
            (Some(a), Some(b)) => self.op.apply(a, b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Interpreted,
    Native,
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "interpreted" => Ok(Engine::Interpreted),
            "native" => Ok(Engine::Native),
            _ => Err(format!("unknown engine `{s}` (expected interpreted or native)")),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Interpreted => "interpreted",
            Engine::Native => "native",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    pub sweeps: Vec<ParameterSweep>,
    pub constraints: Vec<Constraint>,
    pub objectives: Vec<ObjectiveSpec>,
    pub engine: Engine,
    pub parallelism: usize,
    pub seed: u64,
}

/// One concrete parameter assignment. `index` is the position in the full
/// cross product, before constraints are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub index: usize,
    pub assignment: IndexMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSweep {
    // a struct also deserializes from a JSON array, so lists go first
    List(Vec<f64>),
    Range(RawRange),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    min: f64,
    max: f64,
    step: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    name: String,
    kind: String,
    #[serde(default)]
    path: Option<PathBuf>,
    direction: Direction,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    parameters: IndexMap<String, RawSweep>,
    #[serde(default)]
    constraints: Vec<String>,
    #[serde(default)]
    objectives: Vec<RawObjective>,
    #[serde(default)]
    engine: Engine,
    #[serde(default = "one")]
    parallelism: usize,
    #[serde(default)]
    seed: u64,
}

fn one() -> usize {
    1
}

impl DesignSpace {
    pub fn new(sweeps: Vec<ParameterSweep>) -> Self {
        DesignSpace {
            sweeps,
            constraints: Vec::new(),
            objectives: Vec::new(),
            engine: Engine::Interpreted,
            parallelism: 1,
            seed: 0,
        }
    }

    /// Parses a DSE configuration. Relative external objective paths are
    /// resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<DesignSpace, DseError> {
        let raw: RawSpace = serde_json::from_str(text).map_err(|e| DseError::Config(e.to_string()))?;
        let sweeps = raw
            .parameters
            .into_iter()
            .map(|(key, s)| match s {
                RawSweep::Range(r) => ParameterSweep::range(key, r.min, r.max, r.step),
                RawSweep::List(v) => ParameterSweep::list(key, v),
            })
            .collect();
        let constraints = raw
            .constraints
            .iter()
            .map(|c| c.parse())
            .collect::<Result<Vec<Constraint>, _>>()
            .map_err(DseError::Config)?;
        let objectives = raw
            .objectives
            .into_iter()
            .map(|o| {
                let kind = match (o.kind.as_str(), o.path) {
                    ("band_deviation", None) => ObjectiveKind::BandDeviation,
                    ("valve_switch_count", None) => ObjectiveKind::ValveSwitchCount,
                    ("external", Some(p)) => ObjectiveKind::External(if p.is_relative() {
                        base_dir.join(p)
                    } else {
                        p
                    }),
                    ("external", None) => {
                        return Err(DseError::Config(format!("objective `{}` needs a `path`", o.name)))
                    }
                    (k @ ("band_deviation" | "valve_switch_count"), Some(_)) => {
                        return Err(DseError::Config(format!("objective kind `{k}` takes no `path`")))
                    }
                    (k, _) => return Err(DseError::Config(format!("unknown objective kind `{k}`"))),
                };
                Ok(ObjectiveSpec {
                    name: o.name,
                    kind,
                    direction: o.direction,
                })
            })
            .collect::<Result<_, _>>()?;
        let space = DesignSpace {
            sweeps,
            constraints,
            objectives,
            engine: raw.engine,
            parallelism: raw.parallelism,
            seed: raw.seed,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: &Path) -> Result<DesignSpace, DseError> {
        let text = std::fs::read_to_string(path).map_err(|source| DseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            DseError::Config(msg) => DseError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), DseError> {
        let err = |m: String| Err(DseError::Config(m));
        if self.sweeps.is_empty() {
            return err("design space has no parameters".into());
        }
        if self.parallelism == 0 {
            return err("parallelism must be at least 1".into());
        }
        for (i, s) in self.sweeps.iter().enumerate() {
            s.validate().map_err(DseError::Config)?;
            if self.sweeps[..i].iter().any(|o| o.key == s.key) {
                return err(format!("parameter `{}` is swept twice", s.key));
            }
        }
        for c in &self.constraints {
            for k in c.keys() {
                if !self.sweeps.iter().any(|s| s.key == k) {
                    return err(format!("constraint `{c}` refers to `{k}`, which is not swept"));
                }
            }
        }
        for (i, o) in self.objectives.iter().enumerate() {
            if o.name.is_empty() {
                return err("objective with an empty name".into());
            }
            if self.objectives[..i].iter().any(|p| p.name == o.name) {
                return err(format!("objective `{}` declared twice", o.name));
            }
            if let ObjectiveKind::External(p) = &o.kind {
                if p.as_os_str().is_empty() {
                    return err(format!("objective `{}` has an empty path", o.name));
                }
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.sweeps.iter().map(|s| s.key.as_str())
    }

    /// Size of the unconstrained cross product.
    pub fn cross_product_size(&self) -> usize {
        self.sweeps.iter().map(|s| s.expand().len()).product()
    }

    pub fn satisfies(&self, assignment: &IndexMap<String, f64>) -> bool {
        self.constraints.iter().all(|c| c.holds(assignment))
    }
}

/// Builds the assignment for value positions `choice` (one per sweep).
pub(crate) fn assignment_of(space: &DesignSpace, values: &[Vec<f64>], choice: &[usize]) -> IndexMap<String, f64> {
    space
        .sweeps
        .iter()
        .zip(values)
        .zip(choice)
        .map(|((s, vals), &c)| (s.key.clone(), vals[c]))
        .collect()
}

/// Row-major position of `choice`; the last sweep varies fastest.
pub(crate) fn index_of(values: &[Vec<f64>], choice: &[usize]) -> usize {
    values.iter().zip(choice).fold(0, |acc, (vals, &c)| acc * vals.len() + c)
}

pub(crate) fn choice_of(values: &[Vec<f64>], mut index: usize) -> Vec<usize> {
    let mut choice = vec![0; values.len()];
    for (slot, vals) in choice.iter_mut().zip(values).rev() {
        *slot = index % vals.len();
        index /= vals.len();
    }
    choice
}

/// Every assignment of the cross product that satisfies the constraints,
/// in row-major order of sweep declaration.
pub fn enumerate_designs(space: &DesignSpace) -> Result<Vec<DesignPoint>, DseError> {
    space.validate()?;
    let values: Vec<Vec<f64>> = space.sweeps.iter().map(ParameterSweep::expand).collect();
    let total: usize = values.iter().map(Vec::len).product();
    let mut out = Vec::new();
    for index in 0..total {
        let assignment = assignment_of(space, &values, &choice_of(&values, index));
        if space.satisfies(&assignment) {
            out.push(DesignPoint { index, assignment });
        }
    }
    if out.is_empty() {
        return Err(DseError::EmptyDesignSpace { candidates: total });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MIN: &str = "crtlInstance.minLevel";
    const MAX: &str = "crtlInstance.maxLevel";

    fn fixture() -> DesignSpace {
        let mut s = DesignSpace::new(vec![
            ParameterSweep::list(MIN, vec![0.5, 1.0, 1.5]),
            ParameterSweep::list(MAX, vec![1.0, 2.0]),
        ]);
        s.constraints.push(format!("{MIN} < {MAX}").parse().unwrap());
        s
    }

    #[test]
    fn fixture_has_four_designs() {
        let designs = enumerate_designs(&fixture()).unwrap();
        let pairs: Vec<(f64, f64)> = designs.iter().map(|d| (d.assignment[MIN], d.assignment[MAX])).collect();
        assert_eq!(pairs, [(0.5, 1.0), (0.5, 2.0), (1.0, 2.0), (1.5, 2.0)]);
        let idx: Vec<usize> = designs.iter().map(|d| d.index).collect();
        assert_eq!(idx, [0, 1, 3, 5]);
    }

    #[test]
    fn no_constraints_gives_full_product() {
        let mut s = fixture();
        s.constraints.clear();
        assert_eq!(enumerate_designs(&s).unwrap().len(), 6);
    }

    #[test]
    fn literal_contradiction_is_empty() {
        let mut s = fixture();
        s.constraints = vec!["1 < 0".parse().unwrap()];
        assert!(matches!(enumerate_designs(&s), Err(DseError::EmptyDesignSpace { candidates: 6 })));
    }

    #[test]
    fn range_expansion() {
        assert_eq!(ParameterSweep::range("a.b", 0.5, 1.5, 0.5).expand(), [0.5, 1.0, 1.5]);
        // 0.1 * 3 overshoots 0.3 by one ulp; the tolerance keeps it
        assert_eq!(ParameterSweep::range("a.b", 0.0, 0.3, 0.1).expand().len(), 4);
        assert_eq!(ParameterSweep::range("a.b", 1.0, 1.0, 0.1).expand(), [1.0]);
    }

    #[test]
    fn constraint_parsing() {
        let c: Constraint = "a.x<=b.y".parse().unwrap();
        assert_eq!(c.op, CmpOp::Le);
        assert_eq!(c.to_string(), "a.x <= b.y");
        for (text, op) in [("a.x < 1", CmpOp::Lt), ("a.x > 1", CmpOp::Gt), ("a.x >= 1", CmpOp::Ge),
                           ("a.x == 1", CmpOp::Eq), ("a.x != 1e3", CmpOp::Ne)] {
            assert_eq!(text.parse::<Constraint>().unwrap().op, op, "{text}");
        }
        for bad in ["a.x", "a.x < ", "< 1", "a.x < b.y < c.z", "a.x = 1", "a.x + 1 < 2", "x < 1", "a.x < inf"] {
            assert!(bad.parse::<Constraint>().is_err(), "{bad}");
        }
    }

    #[test]
    fn config_parsing() {
        let text = r#"{
            "parameters": {
                "crtlInstance.minLevel": {"min": 0.5, "max": 1.5, "step": 0.5},
                "crtlInstance.maxLevel": [1.0, 2.0]
            },
            "constraints": ["crtlInstance.minLevel < crtlInstance.maxLevel"],
            "objectives": [
                {"name": "dev", "kind": "band_deviation", "direction": "minimize"},
                {"name": "ext", "kind": "external", "path": "scripts/score.sh", "direction": "maximize"}
            ],
            "engine": "native",
            "parallelism": 4,
            "seed": 42
        }"#;
        let s = DesignSpace::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(s.keys().collect::<Vec<_>>(), [MIN, MAX]);
        assert_eq!(s.engine, Engine::Native);
        assert_eq!(s.parallelism, 4);
        assert_eq!(s.objectives[1].kind, ObjectiveKind::External(PathBuf::from("/cfg/scripts/score.sh")));
        assert_eq!(enumerate_designs(&s).unwrap().len(), 4);
    }

    #[test]
    fn three_value_list_is_not_a_range() {
        let text = r#"{"parameters": {"crtlInstance.minLevel": [0.5, 1.0, 1.5]}}"#;
        let s = DesignSpace::parse(text, Path::new(".")).unwrap();
        assert_eq!(s.sweeps[0].expand(), [0.5, 1.0, 1.5]);
    }

    #[test]
    fn config_errors() {
        let base = Path::new(".");
        for bad in [
            r#"{"parameters": {}}"#,
            r#"{"parameters": {"a.b": []}}"#,
            r#"{"parameters": {"a.b": {"min": 0, "max": 1, "step": 0}}}"#,
            r#"{"parameters": {"a.b": {"min": 2, "max": 1, "step": 1}}}"#,
            r#"{"parameters": {"a.b": [1]}, "constraints": ["a.c < 1"]}"#,
            r#"{"parameters": {"a.b": [1]}, "parallelism": 0}"#,
            r#"{"parameters": {"a.b": [1]}, "objectives": [{"name": "x", "kind": "magic", "direction": "minimize"}]}"#,
            r#"{"parameters": {"a.b": [1]}, "objectives": [{"name": "x", "kind": "external", "direction": "minimize"}]}"#,
            r#"{"parameters": {"a.b": [1]}, "objectives": [{"name": "x", "kind": "band_deviation", "direction": "up"}]}"#,
            r#"{"parameters": {"a.b": [1]}, "engine": "jit"}"#,
            r#"{"parameters": {"a.b": [1]}, "extra": 1}"#,
        ] {
            assert!(matches!(DesignSpace::parse(bad, base), Err(DseError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn index_round_trip() {
        let values = vec![vec![0.0; 3], vec![0.0; 4], vec![0.0; 2]];
        for i in 0..24 {
            assert_eq!(index_of(&values, &choice_of(&values, i)), i);
        }
    }

    fn small_space() -> impl Strategy<Value = DesignSpace> {
        let keys = ["a.p", "a.q", "b.r"];
        (
            prop::collection::vec(prop::collection::vec(-3i32..4, 1..6), 1..4),
            prop::collection::vec((0usize..3, 0usize..6, 0usize..3, -3i32..4, any::<bool>()), 0..3),
        )
            .prop_map(move |(lists, cons)| {
                let n = lists.len();
                let mut s = DesignSpace::new(
                    lists
                        .into_iter()
                        .enumerate()
                        .map(|(i, l)| ParameterSweep::list(keys[i], l.into_iter().map(f64::from).collect()))
                        .collect(),
                );
                let ops = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne];
                for (l, op, r, lit, use_lit) in cons {
                    s.constraints.push(Constraint {
                        lhs: Term::Key(keys[l % n].into()),
                        op: ops[op],
                        rhs: if use_lit { Term::Literal(lit.into()) } else { Term::Key(keys[r % n].into()) },
                    });
                }
                s
            })
    }

    proptest! {
        #[test]
        fn count_law(space in small_space()) {
            let total = space.cross_product_size();
            prop_assert!(total <= 1000);
            let values: Vec<Vec<f64>> = space.sweeps.iter().map(ParameterSweep::expand).collect();
            let brute: Vec<usize> = (0..total)
                .filter(|&i| {
                    let a = assignment_of(&space, &values, &choice_of(&values, i));
                    space.constraints.iter().all(|c| {
                        let v = |t: &Term| match t { Term::Key(k) => a[k], Term::Literal(x) => *x };
                        c.op.apply(v(&c.lhs), v(&c.rhs))
                    })
                })
                .collect();
            match enumerate_designs(&space) {
                Ok(d) => {
                    prop_assert_eq!(d.iter().map(|p| p.index).collect::<Vec<_>>(), brute.clone());
                    prop_assert_eq!(d.len() == total, brute.len() == total);
                }
                Err(DseError::EmptyDesignSpace { .. }) => prop_assert!(brute.is_empty()),
                Err(e) => prop_assert!(false, "{}", e),
            }
        }

        #[test]
        fn range_values_in_bounds(min in -10.0f64..10.0, span in 0.0f64..5.0, step in 0.01f64..2.0) {
            let max = min + span;
            let v = ParameterSweep::range("a.b", min, max, step).expand();
            prop_assert!(!v.is_empty());
            prop_assert_eq!(v[0], min);
            prop_assert!(v.iter().all(|x| *x <= max + 1e-9 * step));
            prop_assert!(v.last().unwrap() + step > max + 1e-9 * step);
        }
    }
}

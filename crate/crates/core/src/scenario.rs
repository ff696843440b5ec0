//! Test-case enumeration over simulation variables and synthetic bag
//! generation for each case.
//!
//! The built-in variables describe a barrier car around the ego vehicle:
//! where it starts, how fast it goes relative to the ego, and how it moves.
//! Each case is turned into a bag of `/ego/pose` and `/barrier/pose`
//! messages from a simple Euler-integrated kinematic model.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bag::{BagError, BagSummary, BagWriter, MessageRecord, DEFAULT_CHUNK_TARGET_BYTES};
use crate::store::{ChunkedStore, DiskStore};

pub const EGO_TOPIC: &str = "/ego/pose";
pub const BARRIER_TOPIC: &str = "/barrier/pose";
pub const MANIFEST_NAME: &str = "manifest.tsv";

pub const POSITION: &str = "position";
pub const SPEED: &str = "speed";
pub const MOTION: &str = "motion";

pub const POSITIONS: [&str; 8] = [
    "left-front",
    "left",
    "left-rear",
    "front",
    "rear",
    "right-front",
    "right",
    "right-rear",
];
pub const SPEED_CLASSES: [&str; 3] = ["faster", "equal", "slower"];
pub const MOTIONS: [&str; 3] = ["straight", "left-turn", "right-turn"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("duplicate variable name {0:?}")]
    DuplicateVariable(String),
    #[error("variable {0:?} has no values")]
    EmptyVariable(String),
    #[error("variable {name:?} lists {value:?} twice")]
    DuplicateValue { name: String, value: String },
    #[error("case has no value for {0:?}")]
    MissingVariable(String),
    #[error("unknown value {value:?} for {name:?}")]
    UnknownValue { name: String, value: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Bag(#[from] BagError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioVariable {
    pub name: String,
    pub values: Vec<String>,
}

impl ScenarioVariable {
    pub fn new<I, S>(name: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }
}

/// One assignment of a value to every declared variable, in declaration
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ScenarioCase {
    pub assignments: Vec<(String, String)>,
}

impl ScenarioCase {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.assignments
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> Result<&str, ScenarioError> {
        self.get(name)
            .ok_or_else(|| ScenarioError::MissingVariable(name.to_string()))
    }
}

impl fmt::Display for ScenarioCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, value)) in self.assignments.iter().enumerate() {
            if i > 0 {
                f.write_str("\t")?;
            }
            write!(f, "{name}={value}")?;
        }
        Ok(())
    }
}

/// The barrier-car variables: 8 positions, 3 speed classes, 3 motions.
pub fn barrier_defaults() -> Vec<ScenarioVariable> {
    vec![
        ScenarioVariable::new(POSITION, POSITIONS),
        ScenarioVariable::new(SPEED, SPEED_CLASSES),
        ScenarioVariable::new(MOTION, MOTIONS),
    ]
}

/// Drops cases where a slower barrier starts behind the ego vehicle; it can
/// never catch up, so nothing interesting happens.
pub fn default_filter(case: &ScenarioCase) -> bool {
    let behind = matches!(
        case.get(POSITION),
        Some("rear") | Some("left-rear") | Some("right-rear")
    );
    !(behind && case.get(SPEED) == Some("slower"))
}

pub fn accept_all(_: &ScenarioCase) -> bool {
    true
}

fn validate(variables: &[ScenarioVariable]) -> Result<(), ScenarioError> {
    let mut names = HashSet::new();
    for var in variables {
        if !names.insert(var.name.as_str()) {
            return Err(ScenarioError::DuplicateVariable(var.name.clone()));
        }
        if var.values.is_empty() {
            return Err(ScenarioError::EmptyVariable(var.name.clone()));
        }
        let mut seen = HashSet::new();
        for value in &var.values {
            if !seen.insert(value.as_str()) {
                return Err(ScenarioError::DuplicateValue {
                    name: var.name.clone(),
                    value: value.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Cartesian product of `variables`, first variable varying slowest, minus
/// the cases `filter` rejects.
pub fn enumerate<F>(
    variables: &[ScenarioVariable],
    filter: F,
) -> Result<Vec<ScenarioCase>, ScenarioError>
where
    F: Fn(&ScenarioCase) -> bool,
{
    validate(variables)?;
    let mut cases = Vec::new();
    // Odometer over value indices.
    let mut idx = vec![0usize; variables.len()];
    loop {
        let case = ScenarioCase {
            assignments: variables
                .iter()
                .zip(&idx)
                .map(|(v, &i)| (v.name.clone(), v.values[i].clone()))
                .collect(),
        };
        if filter(&case) {
            cases.push(case);
        }
        let mut pos = variables.len();
        loop {
            if pos == 0 {
                return Ok(cases);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < variables[pos].values.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Kinematic generator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub duration_s: f64,
    pub step_ms: u64,
    /// m/s
    pub ego_speed: f64,
    /// m/s added or removed for faster/slower barriers.
    pub speed_delta: f64,
    /// rad/s for turning barriers.
    pub yaw_rate: f64,
    /// Grid spacing of the barrier's start offset, metres.
    pub offset_m: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            step_ms: 100,
            ego_speed: 10.0,
            speed_delta: 2.0,
            yaw_rate: 0.2,
            offset_m: 10.0,
        }
    }
}

impl SynthParams {
    pub fn step_count(&self) -> u64 {
        let duration_ms = (self.duration_s * 1000.0).round() as u64;
        duration_ms / self.step_ms
    }
}

/// Planar pose; the on-wire payload is four little-endian f64s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
}

impl Pose {
    pub const ENCODED_LEN: usize = 32;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::ENCODED_LEN);
        for v in [self.x, self.y, self.yaw, self.speed] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != Self::ENCODED_LEN {
            return None;
        }
        let f = |i: usize| f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        Some(Self {
            x: f(0),
            y: f(1),
            yaw: f(2),
            speed: f(3),
        })
    }

    fn step(&mut self, yaw_rate: f64, dt: f64) {
        self.x += self.speed * self.yaw.cos() * dt;
        self.y += self.speed * self.yaw.sin() * dt;
        self.yaw += yaw_rate * dt;
    }
}

fn unknown(name: &str, value: &str) -> ScenarioError {
    ScenarioError::UnknownValue {
        name: name.to_string(),
        value: value.to_string(),
    }
}

/// Start offset of the barrier in units of the grid spacing; +x is ahead of
/// the ego vehicle, +y to its left.
fn grid_offset(position: &str) -> Option<(f64, f64)> {
    Some(match position {
        "left-front" => (1.0, 1.0),
        "left" => (0.0, 1.0),
        "left-rear" => (-1.0, 1.0),
        "front" => (1.0, 0.0),
        "rear" => (-1.0, 0.0),
        "right-front" => (1.0, -1.0),
        "right" => (0.0, -1.0),
        "right-rear" => (-1.0, -1.0),
        _ => return None,
    })
}

/// Writes the ego and barrier trajectories for `case` and seals the bag.
pub fn synthesize_bag<S: ChunkedStore>(
    case: &ScenarioCase,
    params: &SynthParams,
    writer: &mut BagWriter<S>,
) -> Result<BagSummary, ScenarioError> {
    if params.step_ms == 0 {
        return Err(ScenarioError::InvalidParams(
            "step_ms must be positive".into(),
        ));
    }
    if !params.duration_s.is_finite() || params.duration_s < 0.0 {
        return Err(ScenarioError::InvalidParams(
            "duration_s must be finite and non-negative".into(),
        ));
    }

    let position = case.require(POSITION)?;
    let (gx, gy) = grid_offset(position).ok_or_else(|| unknown(POSITION, position))?;
    let speed = match case.require(SPEED)? {
        "faster" => params.ego_speed + params.speed_delta,
        "equal" => params.ego_speed,
        "slower" => params.ego_speed - params.speed_delta,
        other => return Err(unknown(SPEED, other)),
    };
    let yaw_rate = match case.require(MOTION)? {
        "straight" => 0.0,
        "left-turn" => params.yaw_rate,
        "right-turn" => -params.yaw_rate,
        other => return Err(unknown(MOTION, other)),
    };

    let mut ego = Pose {
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
        speed: params.ego_speed,
    };
    let mut barrier = Pose {
        x: gx * params.offset_m,
        y: gy * params.offset_m,
        yaw: 0.0,
        speed,
    };
    let dt = params.step_ms as f64 / 1000.0;
    let step_ns = params.step_ms * 1_000_000;
    for k in 0..params.step_count() {
        let ts = k * step_ns;
        writer.append(&MessageRecord::new(EGO_TOPIC, ts, ego.encode()))?;
        writer.append(&MessageRecord::new(BARRIER_TOPIC, ts, barrier.encode()))?;
        ego.step(0.0, dt);
        barrier.step(yaw_rate, dt);
    }
    Ok(writer.seal()?)
}

/// Result of [`generate_suite`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteManifest {
    pub path: PathBuf,
    pub entries: Vec<(usize, PathBuf, ScenarioCase)>,
}

pub fn case_file_name(index: usize) -> String {
    format!("case-{index:04}.dbag")
}

/// Writes one bag per accepted case plus a tab-separated manifest.
pub fn generate_suite<F>(
    variables: &[ScenarioVariable],
    filter: F,
    params: &SynthParams,
    out_dir: &Path,
) -> Result<SuiteManifest, ScenarioError>
where
    F: Fn(&ScenarioCase) -> bool,
{
    let cases = enumerate(variables, filter)?;
    fs::create_dir_all(out_dir)?;
    let mut manifest = String::new();
    let mut entries = Vec::with_capacity(cases.len());
    for (index, case) in cases.into_iter().enumerate() {
        let path = out_dir.join(case_file_name(index));
        let mut writer = BagWriter::open(
            DiskStore::create(&path).map_err(BagError::from)?,
            DEFAULT_CHUNK_TARGET_BYTES,
        )?;
        synthesize_bag(&case, params, &mut writer)?;
        manifest.push_str(&format!("{index:04}\t{case}\n"));
        entries.push((index, path, case));
    }
    let path = out_dir.join(MANIFEST_NAME);
    let mut file = fs::File::create(&path)?;
    file.write_all(manifest.as_bytes())?;
    file.sync_all()?;
    Ok(SuiteManifest { path, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bag::read_all;
    use crate::store::MemoryStore;

    fn case(p: &str, s: &str, m: &str) -> ScenarioCase {
        ScenarioCase {
            assignments: vec![
                (POSITION.into(), p.into()),
                (SPEED.into(), s.into()),
                (MOTION.into(), m.into()),
            ],
        }
    }

    #[test]
    fn zero_variables_give_one_empty_case() {
        let cases = enumerate(&[], accept_all).unwrap();
        assert_eq!(cases, vec![ScenarioCase::default()]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let vars = vec![
            ScenarioVariable::new("a", ["1"]),
            ScenarioVariable::new("a", ["2"]),
        ];
        assert!(matches!(
            enumerate(&vars, accept_all),
            Err(ScenarioError::DuplicateVariable(_))
        ));
        let vars = vec![ScenarioVariable::new("a", ["1", "1"])];
        assert!(enumerate(&vars, accept_all).is_err());
        let vars = vec![ScenarioVariable::new("a", Vec::<String>::new())];
        assert!(enumerate(&vars, accept_all).is_err());
    }

    #[test]
    fn lexicographic_order() {
        let vars = vec![
            ScenarioVariable::new("x", ["1", "2"]),
            ScenarioVariable::new("y", ["a", "b", "c"]),
        ];
        let got: Vec<String> = enumerate(&vars, accept_all)
            .unwrap()
            .iter()
            .map(|c| c.to_string())
            .collect();
        assert_eq!(
            got,
            ["x=1\ty=a", "x=1\ty=b", "x=1\ty=c", "x=2\ty=a", "x=2\ty=b", "x=2\ty=c"]
        );
    }

    #[test]
    fn default_params_give_two_hundred_records() {
        let mut w = BagWriter::open(MemoryStore::new(), 4096).unwrap();
        let s = synthesize_bag(
            &case("front", "equal", "straight"),
            &SynthParams::default(),
            &mut w,
        )
        .unwrap();
        assert_eq!(s.record_count, 200);
        assert_eq!(s.topics[EGO_TOPIC], 100);
        assert_eq!(s.topics[BARRIER_TOPIC], 100);
        let records = read_all(w.store()).unwrap();
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.timestamp, (i as u64 / 2) * 100_000_000);
            assert_eq!(r.topic, if i % 2 == 0 { EGO_TOPIC } else { BARRIER_TOPIC });
            assert_eq!(r.payload.len(), 32);
        }
    }

    #[test]
    fn zero_duration_gives_empty_bag() {
        let params = SynthParams {
            duration_s: 0.0,
            ..SynthParams::default()
        };
        let mut w = BagWriter::open(MemoryStore::new(), 4096).unwrap();
        let s = synthesize_bag(&case("left", "slower", "left-turn"), &params, &mut w).unwrap();
        assert_eq!(s.record_count, 0);
    }

    #[test]
    fn straight_equal_keeps_constant_gap() {
        let mut w = BagWriter::open(MemoryStore::new(), 4096).unwrap();
        synthesize_bag(
            &case("front", "equal", "straight"),
            &SynthParams::default(),
            &mut w,
        )
        .unwrap();
        let records = read_all(w.store()).unwrap();
        for pair in records.chunks(2) {
            let ego = Pose::decode(&pair[0].payload).unwrap();
            let barrier = Pose::decode(&pair[1].payload).unwrap();
            assert!((barrier.x - ego.x - 10.0).abs() < 1e-9);
            assert!((barrier.y - ego.y).abs() < 1e-9);
        }
    }

    #[test]
    fn unknown_values_rejected() {
        let mut w = BagWriter::open(MemoryStore::new(), 4096).unwrap();
        let err = synthesize_bag(
            &case("above", "equal", "straight"),
            &SynthParams::default(),
            &mut w,
        )
        .unwrap_err();
        assert!(matches!(err, ScenarioError::UnknownValue { .. }));
        let partial = ScenarioCase {
            assignments: vec![(POSITION.into(), "left".into())],
        };
        let mut w = BagWriter::open(MemoryStore::new(), 4096).unwrap();
        assert!(matches!(
            synthesize_bag(&partial, &SynthParams::default(), &mut w),
            Err(ScenarioError::MissingVariable(_))
        ));
    }

    #[test]
    fn step_must_be_positive() {
        let params = SynthParams {
            step_ms: 0,
            ..SynthParams::default()
        };
        let mut w = BagWriter::open(MemoryStore::new(), 4096).unwrap();
        assert!(synthesize_bag(&case("left", "equal", "straight"), &params, &mut w).is_err());
    }
}

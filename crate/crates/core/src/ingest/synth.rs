//! Seeded synthetic weather-like tables with templated summaries.
//!
//! The wording of every summary is a deterministic function of a few salient
//! values, so a model that reads the table correctly can learn it exactly:
//!
//! * the record with the largest `max` (earliest on ties) gives
//!   `"<type> high near <max> ."`, plus its mode and direction phrases when
//!   the schema has those attributes;
//! * the record with the smallest `min` gives `"low around <min> ."`.
//!
//! `mean`, `time` and `bucket` never appear in the text.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schema::{AttrKind, Attribute, Schema, DEFAULT_NUMBER_MIN, DEFAULT_NUMBER_WIDTH};
use super::{AttrValue, Instance, Record, Table};

const TYPE_NAMES: [&str; 12] = [
    "temperature",
    "windSpeed",
    "windDir",
    "gust",
    "skyCover",
    "precipPotential",
    "thunderChance",
    "rainChance",
    "snowChance",
    "freezingRainChance",
    "sleetChance",
    "windChill",
];

const MAX_VALUES: [i64; 5] = [50, 60, 70, 80, 90];
const MIN_VALUES: [i64; 4] = [10, 20, 30, 40];
const MODES: [(&str, &str); 4] =
    [("Lkly", "rain likely ."), ("Chc", "chance of rain ."), ("SChc", "slight chance of rain ."), ("Def", "rain .")];
const DIRECTIONS: [(&str, &str); 8] = [
    ("N", "north"),
    ("NE", "northeast"),
    ("E", "east"),
    ("SE", "southeast"),
    ("S", "south"),
    ("SW", "southwest"),
    ("W", "west"),
    ("NW", "northwest"),
];
const TIMES: [&str; 6] = ["6-9", "6-13", "6-21", "9-21", "17-30", "6-30"];
const BUCKETS: [&str; 3] = ["0-10", "10-20", "20-30"];

/// Shape of the generated tables.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    /// Number of distinct record types, 1..=12.
    pub record_types: usize,
    pub records_per_table: usize,
    /// Attributes, 1..=7, taken in order from
    /// `max, min, mean, mode, dir, time, bucket`.
    pub attributes: usize,
    /// Probability that a label-valued attribute is NULL.
    pub null_prob: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { record_types: 3, records_per_table: 4, attributes: 5, null_prob: 0.1 }
    }
}

impl SynthSpec {
    pub fn schema(&self) -> Schema {
        assert!((1..=TYPE_NAMES.len()).contains(&self.record_types), "record_types out of range");
        assert!((1..=7).contains(&self.attributes), "attributes out of range");
        let number = || AttrKind::Number { min: DEFAULT_NUMBER_MIN, width: DEFAULT_NUMBER_WIDTH };
        let all = [
            ("max", number()),
            ("min", number()),
            ("mean", number()),
            ("mode", AttrKind::Mode),
            ("dir", AttrKind::Direction),
            ("time", AttrKind::TimeInterval),
            ("bucket", AttrKind::Categorical { values: BUCKETS.iter().map(|s| s.to_string()).collect() }),
        ];
        Schema {
            record_types: TYPE_NAMES[..self.record_types].iter().map(|s| s.to_string()).collect(),
            attributes: all
                .into_iter()
                .take(self.attributes)
                .map(|(name, kind)| Attribute { name: name.to_string(), kind })
                .collect(),
        }
    }
}

/// Generates `n_tables` instances; identical seeds give identical output.
pub fn generate_synthetic_dataset(seed: u64, n_tables: usize, spec: &SynthSpec) -> (Schema, Vec<Instance>) {
    let schema = spec.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..n_tables).map(|_| generate_one(&mut rng, spec)).collect();
    (schema, instances)
}

fn generate_one(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Instance {
    let m = spec.attributes;
    let mut records = Vec::with_capacity(spec.records_per_table);
    for _ in 0..spec.records_per_table {
        let max = *MAX_VALUES.choose(rng).unwrap();
        let min = *MIN_VALUES.choose(rng).unwrap();
        let mode = MODES[rng.gen_range(0..MODES.len())].0;
        let dir = DIRECTIONS[rng.gen_range(0..DIRECTIONS.len())].0;
        let time = TIMES[rng.gen_range(0..TIMES.len())];
        let bucket = BUCKETS[rng.gen_range(0..BUCKETS.len())];
        let mut maybe = |label: &str| -> Option<AttrValue> {
            (!rng.gen_bool(spec.null_prob)).then(|| AttrValue::Label(label.to_string()))
        };
        let all = [
            Some(AttrValue::Number(max)),
            Some(AttrValue::Number(min)),
            Some(AttrValue::Number((min + max) / 2)),
            maybe(mode),
            maybe(dir),
            maybe(time),
            maybe(bucket),
        ];
        records.push(Record {
            record_type: rng.gen_range(0..spec.record_types),
            values: all.into_iter().take(m).collect(),
        });
    }
    let summary = template_summary(&records, m);
    Instance { table: Table { records }, summary }
}

fn number(rec: &Record, j: usize) -> i64 {
    match rec.values[j] {
        Some(AttrValue::Number(n)) => n,
        _ => unreachable!("synthetic numbers are never NULL"),
    }
}

fn label(rec: &Record, j: usize) -> Option<&str> {
    match rec.values.get(j) {
        Some(Some(AttrValue::Label(s))) => Some(s),
        _ => None,
    }
}

fn template_summary(records: &[Record], m: usize) -> Vec<String> {
    // earliest record wins ties
    let hi = records
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if number(r, 0) > number(&records[best], 0) { i } else { best });
    let top = &records[hi];
    let mut words: Vec<String> = Vec::new();
    let mut push = |s: &str| words.extend(s.split(' ').map(str::to_string));

    push(&format!("{} high near {} .", TYPE_NAMES[top.record_type], number(top, 0)));
    if m >= 2 {
        let lo = records
            .iter()
            .enumerate()
            .fold(0, |best, (i, r)| if number(r, 1) < number(&records[best], 1) { i } else { best });
        push(&format!("low around {} .", number(&records[lo], 1)));
    }
    if let Some(mode) = label(top, 3) {
        push(MODES.iter().find(|(k, _)| *k == mode).unwrap().1);
    }
    if let Some(dir) = label(top, 4) {
        push(&format!("{} wind .", DIRECTIONS.iter().find(|(k, _)| *k == dir).unwrap().1));
    }
    words
}

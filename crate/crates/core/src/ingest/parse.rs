use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::encode::{encode_value, EncodeError};
use super::schema::{AttrKind, Schema};
use super::{detokenize, tokenize, AttrValue, IngestError, Instance, Record, Table};

/// A schema plus the instances that conform to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub instances: Vec<Instance>,
}

#[derive(Deserialize)]
struct RawFile {
    schema: Option<Schema>,
    instances: Vec<RawInstance>,
}

#[derive(Deserialize, Serialize)]
struct RawInstance {
    records: Vec<RawRecord>,
    summary: String,
}

#[derive(Deserialize, Serialize)]
struct RawRecord {
    #[serde(rename = "type")]
    record_type: String,
    attrs: RawAttrs,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum RawAttrs {
    Named(Map<String, Value>),
    Positional(Vec<Value>),
}

#[derive(Serialize)]
struct OutFile<'a> {
    schema: &'a Schema,
    instances: Vec<RawInstance>,
}

/// Reads a table file. `schema` overrides the one embedded in the file.
pub fn parse_table_file(path: &Path, schema: Option<&Schema>) -> Result<Dataset, IngestError> {
    let text =
        fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_dataset_str(&text, schema)
}

pub fn parse_dataset_str(text: &str, schema: Option<&Schema>) -> Result<Dataset, IngestError> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| IngestError::Json {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let schema = match (schema, raw.schema) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s,
        (None, None) => return Err(IngestError::MissingSchema),
    };
    schema.validate()?;
    let instances = raw
        .instances
        .into_iter()
        .enumerate()
        .map(|(i, inst)| convert_instance(&schema, i, inst))
        .collect::<Result<_, _>>()?;
    Ok(Dataset { schema, instances })
}

fn convert_instance(schema: &Schema, idx: usize, raw: RawInstance) -> Result<Instance, IngestError> {
    if raw.records.is_empty() {
        return Err(IngestError::EmptyTable { instance: idx });
    }
    let records = raw
        .records
        .into_iter()
        .enumerate()
        .map(|(r, rec)| convert_record(schema, idx, r, rec))
        .collect::<Result<_, _>>()?;
    Ok(Instance { table: Table { records }, summary: tokenize(&raw.summary) })
}

fn convert_record(schema: &Schema, instance: usize, record: usize, raw: RawRecord) -> Result<Record, IngestError> {
    let record_type = schema.record_type_index(&raw.record_type).ok_or_else(|| IngestError::UnknownRecordType {
        instance,
        record,
        name: raw.record_type.clone(),
    })?;
    let m = schema.num_attributes();
    let mut slots: Vec<Value> = vec![Value::Null; m];
    match raw.attrs {
        RawAttrs::Named(map) => {
            for (name, v) in map {
                let j = schema.attribute_index(&name).ok_or_else(|| IngestError::UnknownAttribute {
                    instance,
                    record,
                    name: name.clone(),
                })?;
                slots[j] = v;
            }
        }
        RawAttrs::Positional(list) => {
            if list.len() != m {
                return Err(IngestError::AttributeCount { instance, record, expected: m, got: list.len() });
            }
            slots = list;
        }
    }
    let mut values = Vec::with_capacity(m);
    for (attr, v) in schema.attributes.iter().zip(slots) {
        let bad = |source| IngestError::BadValue { instance, record, attr: attr.name.clone(), source };
        let value = json_to_value(&attr.kind, v).map_err(bad)?;
        // reject values the encoder cannot represent while we still know where they came from
        encode_value(&attr.kind, value.as_ref()).map_err(bad)?;
        values.push(value);
    }
    Ok(Record { record_type, values })
}

fn json_to_value(kind: &AttrKind, v: Value) -> Result<Option<AttrValue>, EncodeError> {
    match (kind, v) {
        (_, Value::Null) => Ok(None),
        (AttrKind::Number { .. }, Value::Number(n)) => n
            .as_i64()
            .map(|n| Some(AttrValue::Number(n)))
            .ok_or(EncodeError::WrongValueType { expected: "integer", got: n.to_string() }),
        (AttrKind::Number { .. }, Value::String(s)) => s
            .trim()
            .parse::<i64>()
            .map(|n| Some(AttrValue::Number(n)))
            .map_err(|_| EncodeError::WrongValueType { expected: "integer", got: format!("{s:?}") }),
        (AttrKind::Number { .. }, other) => {
            Err(EncodeError::WrongValueType { expected: "integer", got: other.to_string() })
        }
        (_, Value::String(s)) => Ok(Some(AttrValue::Label(s))),
        (_, other) => Err(EncodeError::WrongValueType { expected: "string", got: other.to_string() }),
    }
}

/// Writes a dataset in the table-file JSON format. NULL values are omitted.
pub fn write_table_file(dataset: &Dataset, path: &Path) -> Result<(), IngestError> {
    let text = dataset_to_string(dataset);
    fs::write(path, text).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

pub(crate) fn dataset_to_string(dataset: &Dataset) -> String {
    let schema = &dataset.schema;
    let instances = dataset
        .instances
        .iter()
        .map(|inst| RawInstance {
            records: inst
                .table
                .records
                .iter()
                .map(|rec| {
                    let mut attrs = Map::new();
                    for (a, v) in schema.attributes.iter().zip(&rec.values) {
                        match v {
                            Some(AttrValue::Number(n)) => attrs.insert(a.name.clone(), Value::from(*n)),
                            Some(AttrValue::Label(s)) => attrs.insert(a.name.clone(), Value::from(s.clone())),
                            None => None,
                        };
                    }
                    RawRecord {
                        record_type: schema.record_types[rec.record_type].clone(),
                        attrs: RawAttrs::Named(attrs),
                    }
                })
                .collect(),
            summary: detokenize(&inst.summary),
        })
        .collect();
    let mut s =
        serde_json::to_string_pretty(&OutFile { schema, instances }).expect("dataset serialization cannot fail");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"{
        "record_types": ["temperature", "windDir"],
        "attributes": [
            {"name": "time", "kind": "time_interval"},
            {"name": "min", "kind": "number"},
            {"name": "mean", "kind": "number"},
            {"name": "max", "kind": "number"},
            {"name": "mode", "kind": "mode"},
            {"name": "dir", "kind": "direction"},
            {"name": "bucket", "kind": "categorical", "values": ["0-10", "10-20"]}
        ]
    }"#;

    fn file(instances: &str) -> String {
        format!(r#"{{"schema": {SCHEMA}, "instances": {instances}}}"#)
    }

    #[test]
    fn temperature_record_pads_nulls() {
        let text = file(
            r#"[{"records": [{"type": "temperature", "attrs": {"time": "6-21", "min": 30, "max": 52, "mean": 41}}],
                 "summary": "with a high near 52 ."}]"#,
        );
        let ds = parse_dataset_str(&text, None).unwrap();
        let rec = &ds.instances[0].table.records[0];
        assert_eq!(rec.values.len(), 7);
        assert_eq!(rec.values.iter().filter(|v| v.is_some()).count(), 4);
        assert_eq!(rec.values[3], Some(AttrValue::Number(52)));
        assert_eq!(ds.instances[0].summary, ["with", "a", "high", "near", "52", "."]);
    }

    #[test]
    fn empty_records_is_error() {
        let err = parse_dataset_str(&file(r#"[{"records": [], "summary": "x"}]"#), None).unwrap_err();
        assert!(matches!(err, IngestError::EmptyTable { instance: 0 }));
    }

    #[test]
    fn unknown_type_names_location() {
        let text = file(
            r#"[{"records": [{"type": "temperature", "attrs": {}}, {"type": "gust", "attrs": {}}], "summary": ""}]"#,
        );
        let err = parse_dataset_str(&text, None).unwrap_err();
        assert!(matches!(err, IngestError::UnknownRecordType { instance: 0, record: 1, .. }), "{err}");
    }

    #[test]
    fn positional_attrs_need_exact_count() {
        let text = file(r#"[{"records": [{"type": "temperature", "attrs": [null, 1]}], "summary": ""}]"#);
        let err = parse_dataset_str(&text, None).unwrap_err();
        assert!(matches!(err, IngestError::AttributeCount { expected: 7, got: 2, .. }));

        let text = file(
            r#"[{"records": [{"type": "windDir", "attrs": [null, null, null, null, null, "NNE", null]}], "summary": ""}]"#,
        );
        let ds = parse_dataset_str(&text, None).unwrap();
        assert_eq!(ds.instances[0].table.records[0].values[5], Some(AttrValue::Label("NNE".into())));
    }

    #[test]
    fn malformed_values_are_reported() {
        for (attrs, attr) in [
            (r#"{"min": "warm"}"#, "min"),
            (r#"{"mode": "Perhaps"}"#, "mode"),
            (r#"{"time": "6-7"}"#, "time"),
            (r#"{"max": 5000}"#, "max"),
            (r#"{"dir": 3}"#, "dir"),
        ] {
            let text =
                file(&format!(r#"[{{"records": [{{"type": "temperature", "attrs": {attrs}}}], "summary": ""}}]"#));
            match parse_dataset_str(&text, None) {
                Err(IngestError::BadValue { attr: a, .. }) => assert_eq!(a, attr),
                other => panic!("{attrs}: {other:?}"),
            }
        }
        let text = file(r#"[{"records": [{"type": "temperature", "attrs": {"nope": 1}}], "summary": ""}]"#);
        assert!(matches!(parse_dataset_str(&text, None), Err(IngestError::UnknownAttribute { .. })));
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = parse_dataset_str("{\n\"schema\": ,\n}", None).unwrap_err();
        assert!(matches!(err, IngestError::Json { line: 2, .. }), "{err}");
        assert!(matches!(parse_dataset_str(r#"{"instances": []}"#, None), Err(IngestError::MissingSchema)));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let text = file(
            r#"[{"records": [{"type": "temperature", "attrs": {"min": 30, "max": 52}},
                             {"type": "windDir", "attrs": {"dir": "NW", "bucket": "10-20", "mode": "Lkly"}}],
                 "summary": "South south  wind ."}]"#,
        );
        let ds = parse_dataset_str(&text, None).unwrap();
        let again = parse_dataset_str(&dataset_to_string(&ds), None).unwrap();
        assert_eq!(ds, again);
    }
}

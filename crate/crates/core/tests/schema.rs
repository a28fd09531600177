use serde_json::Value;

use slowlab::estimators::TrainConfig;
use slowlab::harness::{run, ExperimentConfig};

fn load(name: &str) -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/").to_string() + name;
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Every object key is declared, every declared key of a fully serialized
/// object is present, and declared defaults match when `defaults` is set.
fn conforms(value: &Value, schema: &Value, config_schema: &Value, defaults: bool, path: &str) {
    if schema.get("$ref").is_some() {
        return conforms(value, config_schema, config_schema, defaults, path);
    }
    if defaults {
        if let Some(d) = schema.get("default") {
            assert_eq!(value, d, "default of {path}");
        }
    }
    match value {
        Value::Object(map) => {
            if let Some(props) = schema.get("properties").and_then(Value::as_object) {
                for (k, v) in map {
                    let sub = props
                        .get(k)
                        .unwrap_or_else(|| panic!("{path}.{k} is not in the schema"));
                    conforms(v, sub, config_schema, defaults, &format!("{path}.{k}"));
                }
                for k in schema["required"].as_array().into_iter().flatten() {
                    assert!(
                        map.contains_key(k.as_str().unwrap()),
                        "{path} lacks required {k}"
                    );
                }
            } else if let Some(extra) = schema.get("additionalProperties").filter(|s| s.is_object())
            {
                for (k, v) in map {
                    conforms(v, extra, config_schema, defaults, &format!("{path}.{k}"));
                }
            }
        }
        Value::Array(items) => {
            if let Some(item) = schema.get("items") {
                for (i, v) in items.iter().enumerate() {
                    conforms(v, item, config_schema, false, &format!("{path}[{i}]"));
                }
            }
        }
        _ => {}
    }
}

#[test]
fn default_config_matches_schema_and_its_defaults() {
    let schema = load("experiment-config.schema.json");
    let value = serde_json::to_value(ExperimentConfig::default()).unwrap();
    conforms(&value, &schema, &schema, true, "config");
    let declared: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
    let present: Vec<&String> = value.as_object().unwrap().keys().collect();
    assert_eq!(declared.len(), present.len());
}

#[test]
fn result_record_matches_schema() {
    let config_schema = load("experiment-config.schema.json");
    let schema = load("result-record.schema.json");
    let mut cfg = ExperimentConfig {
        name: "schema".into(),
        seeds: 1,
        ..Default::default()
    };
    cfg.dataset.sources.dim = 2;
    cfg.dataset.sources.count = 2000;
    cfg.estimator.train = TrainConfig {
        steps: 50,
        ..cfg.estimator.train
    };
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, Some(dir.path())).unwrap();
    let record: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("record.json")).unwrap())
            .unwrap();
    conforms(&record, &schema, &config_schema, false, "record");
    assert_eq!(
        record["schema_version"],
        schema["properties"]["schema_version"]["const"]
    );
}

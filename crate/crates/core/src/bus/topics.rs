//! Topic names and MQTT-style filter matching.
//!
//! Topics are `/`-separated levels. Publish topics may not contain the
//! wildcards `+` (one level) or `#` (the remaining levels, last position only).

use super::BusError;

pub const COVERAGE_REQUEST: &str = "dt/coverage/request";
pub const COVERAGE_RESULT_PREFIX: &str = "dt/coverage/result/";
pub const SENSORS_PREFIX: &str = "dt/sensors/";
pub const ACTUATORS_PREFIX: &str = "dt/actuators/";
pub const ALL_SENSORS: &str = "dt/sensors/#";
pub const ALL_RESULTS: &str = "dt/coverage/result/+";

const MAX_TOPIC_BYTES: usize = 65_535;

pub fn coverage_result(job_id: &str) -> String {
    format!("{COVERAGE_RESULT_PREFIX}{job_id}")
}

pub fn sensor(sensor_id: &str) -> String {
    format!("{SENSORS_PREFIX}{sensor_id}")
}

pub fn actuator(actuator_id: &str) -> String {
    format!("{ACTUATORS_PREFIX}{actuator_id}")
}

fn invalid(topic: &str, reason: &str) -> BusError {
    BusError::Topic {
        topic: topic.to_string(),
        reason: reason.to_string(),
    }
}

fn check_common(topic: &str) -> Result<(), BusError> {
    if topic.is_empty() {
        return Err(invalid(topic, "empty"));
    }
    if topic.len() > MAX_TOPIC_BYTES {
        return Err(invalid(topic, "longer than 65535 bytes"));
    }
    if topic.contains('\0') {
        return Err(invalid(topic, "contains NUL"));
    }
    Ok(())
}

pub fn validate_topic(topic: &str) -> Result<(), BusError> {
    check_common(topic)?;
    if topic.contains(['+', '#']) {
        return Err(invalid(
            topic,
            "wildcards are not allowed in publish topics",
        ));
    }
    Ok(())
}

pub fn validate_filter(filter: &str) -> Result<(), BusError> {
    check_common(filter)?;
    let levels: Vec<&str> = filter.split('/').collect();
    for (k, level) in levels.iter().enumerate() {
        if level.contains('#') && (*level != "#" || k + 1 != levels.len()) {
            return Err(invalid(filter, "`#` must be the whole last level"));
        }
        if level.contains('+') && *level != "+" {
            return Err(invalid(filter, "`+` must be a whole level"));
        }
    }
    Ok(())
}

/// True when `topic` is a valid single topic level for an identifier.
pub fn is_level_safe(id: &str) -> bool {
    !id.is_empty() && !id.contains(['/', '+', '#', '\0'])
}

pub fn matches(filter: &str, topic: &str) -> bool {
    let mut f = filter.split('/');
    let mut t = topic.split('/');
    // Wildcards do not match topics starting with `$`.
    if topic.starts_with('$') && (filter.starts_with('+') || filter.starts_with('#')) {
        return false;
    }
    loop {
        match (f.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

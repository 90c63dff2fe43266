use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use crate::bus::SensorReading;
use crate::coverage::CoverageMap;
use crate::propagation::Transmitter;

/// Point-in-time copy of the twin state.
#[derive(Debug, Clone, Default)]
pub struct TwinSnapshot {
    /// Latest reading per sensor id.
    pub sensors: BTreeMap<String, SensorReading>,
    pub last_map: Option<Arc<CoverageMap>>,
    pub active_tx: Option<Transmitter>,
    /// Readings ignored because an equal-or-newer one was already stored.
    pub stale_readings: u64,
}

/// Last-value sensor store plus the most recent coverage map.
#[derive(Debug, Default)]
pub struct TwinState {
    inner: RwLock<TwinSnapshot>,
}

impl TwinState {
    /// Stores `reading` unless an older-than-stored timestamp makes it stale.
    ///
    /// Returns whether the reading was kept.
    pub fn ingest(&self, reading: SensorReading) -> bool {
        let mut s = self.inner.write().unwrap();
        let stored = s.sensors.get(&reading.sensor_id).map(|r| r.ts_ms);
        if let Some(stored) = stored.filter(|&ts| reading.ts_ms < ts) {
            s.stale_readings += 1;
            log::debug!(
                "stale reading for {}: {} < {stored}",
                reading.sensor_id,
                reading.ts_ms
            );
            return false;
        }
        s.sensors.insert(reading.sensor_id.clone(), reading);
        true
    }

    pub fn set_map(&self, map: CoverageMap, tx: Transmitter) {
        let mut s = self.inner.write().unwrap();
        s.last_map = Some(Arc::new(map));
        s.active_tx = Some(tx);
    }

    pub fn snapshot(&self) -> TwinSnapshot {
        self.inner.read().unwrap().clone()
    }
}

//! Per-nozzle spray state machine.
//!
//! A detection at time `t` commands the nozzle on at `t + latency` and off
//! `spray_duration` later. A retrigger that lands before the pending
//! off-time extends the same activation instead of starting a new one, so
//! the activations of one nozzle never overlap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NozzleMode {
    Off,
    Commanded,
    On,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NozzleState {
    pub mode: NozzleMode,
    pub on_since_ms: f64,
    pub scheduled_off_ms: f64,
    pub flow_rate_lps: f64,
}

/// One completed nozzle activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprayEvent {
    pub nozzle_id: usize,
    pub start_position_m: f64,
    pub start_time_ms: f64,
    pub duration_ms: f64,
    pub volume_l: f64,
    pub geo: Option<(f64, f64)>,
}

impl SprayEvent {
    pub fn from_interval(
        nozzle_id: usize,
        on_ms: f64,
        off_ms: f64,
        flow_rate_lps: f64,
        vehicle: &VehicleState,
    ) -> Self {
        let duration_ms = off_ms - on_ms;
        Self {
            nozzle_id,
            start_position_m: vehicle.position_at(on_ms),
            start_time_ms: on_ms,
            duration_ms,
            volume_l: flow_rate_lps * duration_ms / 1000.0,
            geo: None,
        }
    }

    /// Along-track ground interval under the nozzle while it was open.
    pub fn along_interval(&self, speed_mps: f64) -> (f64, f64) {
        (
            self.start_position_m,
            self.start_position_m + speed_mps * self.duration_ms / 1000.0,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Nozzle {
    id: usize,
    state: NozzleState,
    last_detection_ms: Option<f64>,
}

impl Nozzle {
    pub fn new(id: usize, flow_rate_lps: f64) -> Result<Self> {
        if !(flow_rate_lps > 0.0) || !flow_rate_lps.is_finite() {
            return Err(Error::Domain(format!(
                "nozzle flow rate must be > 0, got {flow_rate_lps}"
            )));
        }
        Ok(Self {
            id,
            state: NozzleState {
                mode: NozzleMode::Off,
                on_since_ms: 0.0,
                scheduled_off_ms: 0.0,
                flow_rate_lps,
            },
            last_detection_ms: None,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn state(&self) -> &NozzleState {
        &self.state
    }

    fn close(&mut self, vehicle: &VehicleState) -> SprayEvent {
        let s = &self.state;
        let event = SprayEvent::from_interval(
            self.id,
            s.on_since_ms,
            s.scheduled_off_ms,
            s.flow_rate_lps,
            vehicle,
        );
        self.state.mode = NozzleMode::Off;
        event
    }

    /// Moves the state machine to time `now_ms`, returning the activation
    /// that ended at or before `now_ms`, if any.
    pub fn advance(&mut self, now_ms: f64, vehicle: &VehicleState) -> Option<SprayEvent> {
        match self.state.mode {
            NozzleMode::Off => None,
            _ if now_ms >= self.state.scheduled_off_ms => Some(self.close(vehicle)),
            NozzleMode::Commanded if now_ms >= self.state.on_since_ms => {
                self.state.mode = NozzleMode::On;
                None
            }
            _ => None,
        }
    }

    /// Handles a detection taken at `detection_ms`. Returns the previous
    /// activation when the new one cannot be merged into it.
    pub fn schedule(
        &mut self,
        detection_ms: f64,
        latency_ms: f64,
        spray_duration_ms: f64,
        vehicle: &VehicleState,
    ) -> Result<Option<SprayEvent>> {
        if let Some(last) = self.last_detection_ms {
            if detection_ms < last {
                return Err(Error::Protocol(format!(
                    "nozzle {}: detection at {detection_ms} ms arrived after one at {last} ms",
                    self.id
                )));
            }
        }
        if !(spray_duration_ms > 0.0) || !(latency_ms >= 0.0) {
            return Err(Error::Domain(format!(
                "spray duration must be > 0 and latency >= 0, got {spray_duration_ms} / {latency_ms}"
            )));
        }
        self.last_detection_ms = Some(detection_ms);

        let on = detection_ms + latency_ms;
        let off = on + spray_duration_ms;
        let mut finished = self.advance(detection_ms, vehicle);

        match self.state.mode {
            NozzleMode::Off => {}
            _ if on <= self.state.scheduled_off_ms => {
                self.state.on_since_ms = self.state.on_since_ms.min(on);
                self.state.scheduled_off_ms = self.state.scheduled_off_ms.max(off);
                return Ok(finished);
            }
            _ => {
                debug_assert!(finished.is_none());
                finished = Some(self.close(vehicle));
            }
        }
        self.state.mode = NozzleMode::Commanded;
        self.state.on_since_ms = on;
        self.state.scheduled_off_ms = off;
        Ok(finished)
    }

    /// Closes any pending activation at the end of a pass.
    pub fn finish(&mut self, vehicle: &VehicleState) -> Option<SprayEvent> {
        (self.state.mode != NozzleMode::Off).then(|| self.close(vehicle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{displacement_during, Speed};
    use approx::assert_abs_diff_eq;

    fn vehicle() -> VehicleState {
        VehicleState {
            along_track_position_m: 0.0,
            speed: Speed::from_kmh(8.0).unwrap(),
            row_index: 0,
        }
    }

    #[test]
    fn single_detection_covers_lead_to_section_end() {
        let v = vehicle();
        let mut n = Nozzle::new(0, 0.035).unwrap();
        assert!(n.schedule(0.0, 58.16, 450.0, &v).unwrap().is_none());
        assert_eq!(n.state().mode, NozzleMode::Commanded);
        assert!(n.advance(60.0, &v).is_none());
        assert_eq!(n.state().mode, NozzleMode::On);
        let e = n.finish(&v).unwrap();
        let (a, b) = e.along_interval(v.speed.mps());
        assert_abs_diff_eq!(a * 1000.0, 129.2, epsilon = 0.05);
        assert_abs_diff_eq!(b * 1000.0, 1129.2, epsilon = 0.05);
        assert_abs_diff_eq!(
            a * 1000.0,
            displacement_during(v.speed, 58.16).unwrap(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(e.volume_l, 0.035 * 0.45, epsilon = 1e-12);
    }

    #[test]
    fn retrigger_merges_into_one_event() {
        let v = vehicle();
        let mut n = Nozzle::new(3, 0.03).unwrap();
        assert!(n.schedule(0.0, 58.16, 450.0, &v).unwrap().is_none());
        assert!(n.schedule(100.0, 58.16, 450.0, &v).unwrap().is_none());
        let e = n.finish(&v).unwrap();
        assert_abs_diff_eq!(e.duration_ms, 550.0, epsilon = 1e-9);
        assert_eq!(e.nozzle_id, 3);
        assert!(n.finish(&v).is_none());
    }

    #[test]
    fn separated_detections_give_two_events() {
        let v = vehicle();
        let mut n = Nozzle::new(0, 0.03).unwrap();
        n.schedule(0.0, 50.0, 450.0, &v).unwrap();
        // off at 500 ms; next detection's spray starts at 600 + 50
        let first = n.schedule(600.0, 50.0, 450.0, &v).unwrap().unwrap();
        assert_eq!(first.start_time_ms, 50.0);
        assert_eq!(first.duration_ms, 450.0);
        let second = n.finish(&v).unwrap();
        assert_eq!(second.start_time_ms, 650.0);
    }

    #[test]
    fn gap_shorter_than_latency_is_still_merged_or_split_consistently() {
        let v = vehicle();
        let mut n = Nozzle::new(0, 0.03).unwrap();
        n.schedule(0.0, 50.0, 450.0, &v).unwrap();
        // detection at 460 is before off (500) but its spray starts at 510
        let first = n.schedule(460.0, 50.0, 450.0, &v).unwrap().unwrap();
        assert_eq!(first.start_time_ms + first.duration_ms, 500.0);
        let second = n.finish(&v).unwrap();
        assert!(second.start_time_ms >= first.start_time_ms + first.duration_ms);
    }

    #[test]
    fn out_of_order_detection_is_a_protocol_error() {
        let v = vehicle();
        let mut n = Nozzle::new(0, 0.03).unwrap();
        n.schedule(100.0, 50.0, 450.0, &v).unwrap();
        assert!(matches!(n.schedule(99.0, 50.0, 450.0, &v), Err(Error::Protocol(_))));
    }

    #[test]
    fn no_detections_no_events() {
        let v = vehicle();
        let mut n = Nozzle::new(0, 0.03).unwrap();
        assert!(n.advance(10_000.0, &v).is_none());
        assert!(n.finish(&v).is_none());
    }

    #[test]
    fn rejects_bad_flow_and_duration() {
        assert!(Nozzle::new(0, 0.0).is_err());
        let mut n = Nozzle::new(0, 0.03).unwrap();
        assert!(n.schedule(0.0, 50.0, 0.0, &vehicle()).is_err());
    }
}

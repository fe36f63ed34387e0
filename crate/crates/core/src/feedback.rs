//! Guidance feedback laws: visual cue, audio alarm gate and the repulsive haptic force.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::{parse_entries, Entry};
use crate::error::{Error, Result};
use crate::query::ProximityResult;
use crate::volume::Vec3;

/// Thresholds and gains for the three modalities. Distances in mm, force in N.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackConfig {
    pub tau_audio: f64,
    pub tau_force: f64,
    pub f_max: f64,
    pub visual_alert: f64,
    /// Scale the force ramp by `1/tau_force` so that `f_max` is the force at contact.
    pub normalize_force: bool,
    pub critical_labels: BTreeSet<u32>,
    /// Subtracted from every queried distance, e.g. a burr radius.
    pub tip_offset: f64,
    pub enable_visual: bool,
    pub enable_audio: bool,
    pub enable_haptic: bool,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            tau_audio: 2.0,
            tau_force: 1.0,
            f_max: 3.0,
            visual_alert: 1.0,
            normalize_force: true,
            critical_labels: BTreeSet::new(),
            tip_offset: 0.0,
            enable_visual: true,
            enable_audio: true,
            enable_haptic: true,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_audio", self.tau_audio),
            ("tau_force", self.tau_force),
            ("f_max", self.f_max),
            ("visual_alert", self.visual_alert),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.tau_audio < self.tau_force {
            return Err(Error::InvalidConfig(format!(
                "tau_audio ({}) must not be below tau_force ({})",
                self.tau_audio, self.tau_force
            )));
        }
        if !self.tip_offset.is_finite() {
            return Err(Error::InvalidConfig("tip_offset must be finite".into()));
        }
        Ok(())
    }

    /// Applies one config entry. Returns `false` for keys this struct does not own.
    pub fn apply(&mut self, e: &Entry) -> Result<bool> {
        match e.key.as_str() {
            "tau_audio" => self.tau_audio = e.parse()?,
            "tau_force" => self.tau_force = e.parse()?,
            "f_max" => self.f_max = e.parse()?,
            "visual_alert" => self.visual_alert = e.parse()?,
            "normalize_force" => self.normalize_force = e.flag()?,
            "critical_labels" => self.critical_labels = e.list()?.into_iter().collect(),
            "tip_offset" => self.tip_offset = e.parse()?,
            "enable_visual" => self.enable_visual = e.flag()?,
            "enable_audio" => self.enable_audio = e.flag()?,
            "enable_haptic" => self.enable_haptic = e.flag()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses a config file holding only feedback keys; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for e in parse_entries(text)? {
            if !cfg.apply(&e)? {
                return Err(e.error("unknown key"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let labels: Vec<String> = self.critical_labels.iter().map(u32::to_string).collect();
        let _ = writeln!(s, "tau_audio = {}", self.tau_audio);
        let _ = writeln!(s, "tau_force = {}", self.tau_force);
        let _ = writeln!(s, "f_max = {}", self.f_max);
        let _ = writeln!(s, "visual_alert = {}", self.visual_alert);
        let _ = writeln!(s, "normalize_force = {}", self.normalize_force);
        let _ = writeln!(s, "critical_labels = {}", labels.join(","));
        let _ = writeln!(s, "tip_offset = {}", self.tip_offset);
        let _ = writeln!(s, "enable_visual = {}", self.enable_visual);
        let _ = writeln!(s, "enable_audio = {}", self.enable_audio);
        let _ = writeln!(s, "enable_haptic = {}", self.enable_haptic);
        s
    }

    fn effective_distance(&self, r: &ProximityResult) -> f64 {
        r.distance - self.tip_offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisualCue {
    pub name: String,
    pub distance: f64,
    pub alert: bool,
}

/// Guidance output of one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackFrame {
    pub timestamp: f64,
    pub label: u32,
    /// Absent when the visual modality is disabled.
    pub visual: Option<VisualCue>,
    pub audio_active: bool,
    pub force: [f64; 3],
    /// The force should have fired but the gradient vanished.
    pub force_degenerate: bool,
}

impl FeedbackFrame {
    pub fn force_vector(&self) -> Vec3 {
        Vec3::from(self.force)
    }
}

pub fn visual_cue(r: &ProximityResult, c: &FeedbackConfig) -> VisualCue {
    let distance = c.effective_distance(r);
    VisualCue {
        name: r.name.clone(),
        distance,
        alert: distance < c.visual_alert,
    }
}

pub fn audio_gate(r: &ProximityResult, c: &FeedbackConfig) -> bool {
    c.critical_labels.contains(&r.label) && c.effective_distance(r) < c.tau_audio
}

/// Ramp magnitude for a distance, before applying the direction.
pub fn force_magnitude(d: f64, c: &FeedbackConfig) -> f64 {
    if d >= c.tau_force {
        return 0.0;
    }
    if c.normalize_force {
        // 1 - d/tau never rounds above 1 for d >= 0, so f_max stays a hard cap
        c.f_max * (1.0 - d / c.tau_force)
    } else {
        c.f_max * (c.tau_force - d)
    }
}

/// Repulsive force along the distance gradient (away from the anatomy).
/// Zero outside the activation threshold or when the gradient is degenerate.
pub fn haptic_force(r: &ProximityResult, c: &FeedbackConfig) -> Vec3 {
    let m = force_magnitude(c.effective_distance(r), c);
    match r.gradient {
        Some(dir) if m > 0.0 => dir * m,
        _ => Vec3::zeros(),
    }
}

pub fn compose_frame(r: &ProximityResult, c: &FeedbackConfig, t: f64) -> FeedbackFrame {
    let (force, force_degenerate) = if c.enable_haptic {
        let fires = c.effective_distance(r) < c.tau_force;
        (haptic_force(r, c), fires && r.gradient.is_none())
    } else {
        (Vec3::zeros(), false)
    };
    FeedbackFrame {
        timestamp: t,
        label: r.label,
        visual: c.enable_visual.then(|| visual_cue(r, c)),
        audio_active: c.enable_audio && audio_gate(r, c),
        force: force.into(),
        force_degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(label: u32, distance: f64, gradient: Option<Vec3>) -> ProximityResult {
        ProximityResult {
            label,
            name: "EAC".into(),
            distance,
            gradient,
            voxel: [0, 0, 0],
        }
    }

    fn critical(labels: &[u32]) -> FeedbackConfig {
        FeedbackConfig {
            critical_labels: labels.iter().copied().collect(),
            ..Default::default()
        }
    }

    #[test]
    fn visual_alert_threshold() {
        let c = FeedbackConfig::default();
        assert!(!visual_cue(&result(1, 2.5, None), &c).alert);
        assert!(visual_cue(&result(1, 0.9, None), &c).alert);
        assert!(!visual_cue(&result(1, 1.0, None), &c).alert);
        let cue = visual_cue(&result(1, 1.0, None), &FeedbackConfig { tip_offset: 0.25, ..c });
        assert_eq!(cue.distance, 0.75);
        assert!(cue.alert);
        assert_eq!(cue.name, "EAC");
    }

    #[test]
    fn audio_gate_rules() {
        let c = critical(&[2]);
        assert!(audio_gate(&result(2, 1.5, None), &c));
        assert!(!audio_gate(&result(3, 0.1, None), &c));
        assert!(!audio_gate(&result(2, 2.0, None), &c));
    }

    #[test]
    fn force_law_examples() {
        let x = Some(Vec3::x());
        let c = FeedbackConfig::default();
        assert_eq!(haptic_force(&result(1, 1.0, x), &c), Vec3::zeros());
        assert_eq!(haptic_force(&result(1, 0.5, x), &c), Vec3::new(1.5, 0.0, 0.0));
        let literal = FeedbackConfig {
            normalize_force: false,
            ..c.clone()
        };
        assert_eq!(haptic_force(&result(1, 0.5, x), &literal), Vec3::new(1.5, 0.0, 0.0));
        // the two laws differ once tau_force != 1
        let wide = FeedbackConfig {
            tau_force: 2.0,
            tau_audio: 2.0,
            ..c
        };
        assert_eq!(force_magnitude(0.0, &wide), 3.0);
        assert_eq!(force_magnitude(0.0, &FeedbackConfig { normalize_force: false, ..wide }), 6.0);
    }

    #[test]
    fn degenerate_gradient_gives_zero_and_flag() {
        let c = FeedbackConfig::default();
        let f = compose_frame(&result(1, 0.2, None), &c, 0.0);
        assert_eq!(f.force, [0.0; 3]);
        assert!(f.force_degenerate);
        let f = compose_frame(&result(1, 5.0, None), &c, 0.0);
        assert!(!f.force_degenerate);
    }

    #[test]
    fn interior_force_keeps_growing() {
        let c = FeedbackConfig::default();
        assert_eq!(force_magnitude(-1.0, &c), 6.0);
    }

    #[test]
    fn composed_frames() {
        let c = critical(&[2]);
        let far = compose_frame(&result(2, 2.5, Some(Vec3::x())), &c, 1.0);
        assert!(!far.visual.as_ref().unwrap().alert);
        assert!(!far.audio_active);
        assert_eq!(far.force, [0.0; 3]);

        let mid = compose_frame(&result(2, 1.5, Some(Vec3::x())), &c, 2.0);
        assert!(mid.audio_active);
        assert_eq!(mid.force, [0.0; 3]);

        let near = compose_frame(&result(2, 0.5, Some(Vec3::x())), &c, 3.0);
        assert!(near.audio_active && near.visual.as_ref().unwrap().alert);
        assert_eq!(near.force, [1.5, 0.0, 0.0]);
        assert_eq!(near.timestamp, 3.0);
    }

    #[test]
    fn disabling_one_modality_leaves_others() {
        let c = critical(&[2]);
        let r = result(2, 0.4, Some(Vec3::new(0.0, 0.6, 0.8)));
        let all = compose_frame(&r, &c, 0.0);
        for off in 0..3 {
            let mut c2 = c.clone();
            match off {
                0 => c2.enable_visual = false,
                1 => c2.enable_audio = false,
                _ => c2.enable_haptic = false,
            }
            let f = compose_frame(&r, &c2, 0.0);
            assert_eq!(f.visual.is_some(), off != 0);
            if off != 0 {
                assert_eq!(f.visual, all.visual);
            }
            if off != 1 {
                assert_eq!(f.audio_active, all.audio_active);
            } else {
                assert!(!f.audio_active);
            }
            if off != 2 {
                assert_eq!(f.force, all.force);
            } else {
                assert_eq!(f.force, [0.0; 3]);
            }
        }
    }

    #[test]
    fn config_text_round_trip_and_validation() {
        let c = FeedbackConfig {
            tau_audio: 3.5,
            critical_labels: [2, 5].into(),
            normalize_force: false,
            enable_audio: false,
            ..Default::default()
        };
        assert_eq!(FeedbackConfig::from_text(&c.to_text()).unwrap(), c);
        assert!(FeedbackConfig::from_text("tau_audio = 0.5\n").is_err());
        assert!(FeedbackConfig::from_text("f_max = -1\n").is_err());
        assert!(FeedbackConfig::from_text("bogus = 1\n").is_err());
        assert!(FeedbackConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn monotone_and_capped(d1 in 0.0f64..2.0, d2 in 0.0f64..2.0, tau in 0.1f64..5.0) {
            let c = FeedbackConfig { tau_force: tau, tau_audio: tau, ..Default::default() };
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(force_magnitude(lo, &c) >= force_magnitude(hi, &c));
            prop_assert!(force_magnitude(lo, &c) <= c.f_max);
        }

        #[test]
        fn continuity_below_threshold(tau in 0.1f64..5.0) {
            let c = FeedbackConfig { tau_force: tau, tau_audio: tau, ..Default::default() };
            for eps in [1e-3, 1e-6] {
                prop_assert!(force_magnitude(tau - eps, &c) <= c.f_max * eps / tau + 1e-9);
            }
        }

        #[test]
        fn force_implies_audio_on_critical(d in -1.0f64..3.0, ta in 1.0f64..3.0, tf in 0.1f64..1.0) {
            let c = FeedbackConfig { tau_audio: ta, tau_force: tf, critical_labels: [7].into(), ..Default::default() };
            let r = result(7, d, Some(Vec3::z()));
            if haptic_force(&r, &c).norm() > 0.0 {
                prop_assert!(audio_gate(&r, &c));
            }
        }
    }
}

//! Run configuration: one flat key = value namespace shared by the config
//! file and the CLI flags, with a canonical serialization whose FNV-1a hash
//! stamps every pipeline artifact.
//!
//! Runtime-only keys (`jobs`, `data_dir`, `out_dir`) are excluded from the
//! hash: they change where and how fast work happens, never what is
//! computed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::context::{ContextConfig, TrainConfig};
use crate::data::{DataError, SynthConfig};
use crate::extractor::{ExtractorConfig, MaskMode};
use crate::hash::{fnv1a64, hex64};

/// All pipeline settings with their defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Segment length in milliseconds.
    pub delta_t_ms: i64,
    /// History windows fed to the recurrence.
    pub m_history: usize,
    /// Price-grid levels per side.
    pub k_levels: usize,
    /// Grid spacing in ticks.
    pub tick: i64,
    /// Window feature width d_e.
    pub d_e: usize,
    pub heads: usize,
    pub l_max: usize,
    pub mask_w: f64,
    pub mask_mode: MaskMode,
    /// Selection rate / boundary trade-off.
    pub mu: f64,
    /// Weight decay for the hypersphere objective.
    pub lambda: f64,
    pub lr: f64,
    pub lstm_hidden: usize,
    pub gen_hidden: usize,
    pub enc_hidden: usize,
    pub context_feed_book: bool,
    /// Drop cancel events at ingestion.
    pub drop_cancels: bool,

    pub context_epochs: usize,
    pub context_patience: usize,
    pub context_batch: usize,
    pub context_segments_per_epoch: usize,
    pub svdd_epochs: usize,
    pub svdd_patience: usize,
    pub svdd_batch: usize,
    pub svdd_segments_per_epoch: usize,

    pub ridge_alpha: f64,

    pub synth_instruments: usize,
    pub synth_days: usize,
    pub synth_session_ms: i64,
    pub synth_t0_ms: i64,
    pub synth_init_price_ticks: i64,
    pub synth_order_rate_per_s: f64,
    pub synth_cancel_rate_per_order_s: f64,
    pub synth_marketable_frac: f64,
    pub synth_mean_size: f64,
    pub synth_offset_q: f64,
    pub synth_anomaly_frac: f64,
    pub synth_anomaly_jitter: f64,
    pub synth_anomaly_run_len: usize,
    pub synth_anomaly_rate_mult: f64,
    pub synth_anomaly_imbalance: f64,
    pub synth_anomaly_marketable_mult: f64,
    pub synth_label_coupling: f64,
    /// ISO date of synthetic day 0.
    pub synth_base_date: String,

    /// Per-day parallelism for stateless stages (not hashed).
    pub jobs: usize,
    /// Input data directory (not hashed).
    pub data_dir: String,
    /// Artifact output directory (not hashed).
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            delta_t_ms: 4_000,
            m_history: 100,
            k_levels: 10,
            tick: 1,
            d_e: 16,
            heads: 4,
            l_max: 256,
            mask_w: 0.25,
            mask_mode: MaskMode::Hybrid,
            mu: 0.02,
            lambda: 0.1,
            lr: 1e-3,
            lstm_hidden: 64,
            gen_hidden: 64,
            enc_hidden: 16,
            context_feed_book: false,
            drop_cancels: false,
            context_epochs: 60,
            context_patience: 10,
            context_batch: 64,
            context_segments_per_epoch: 512,
            svdd_epochs: 60,
            svdd_patience: 10,
            svdd_batch: 64,
            svdd_segments_per_epoch: 2048,
            ridge_alpha: 1e-3,
            synth_instruments: 2,
            synth_days: 24,
            synth_session_ms: 14_400_000,
            synth_t0_ms: 0,
            synth_init_price_ticks: 10_000,
            synth_order_rate_per_s: 3.0,
            synth_cancel_rate_per_order_s: 0.01,
            synth_marketable_frac: 0.15,
            synth_mean_size: 4.0,
            synth_offset_q: 0.35,
            synth_anomaly_frac: 0.02,
            synth_anomaly_jitter: 0.0,
            synth_anomaly_run_len: 6,
            synth_anomaly_rate_mult: 6.0,
            synth_anomaly_imbalance: 0.85,
            synth_anomaly_marketable_mult: 2.5,
            synth_label_coupling: 0.0,
            synth_base_date: "2024-01-01".to_string(),
            jobs: 1,
            data_dir: "data".to_string(),
            out_dir: "out".to_string(),
        }
    }
}

macro_rules! config_fields {
    ($macro:ident) => {
        $macro! {
            seed: u64,
            delta_t_ms: i64,
            m_history: usize,
            k_levels: usize,
            tick: i64,
            d_e: usize,
            heads: usize,
            l_max: usize,
            mask_w: f64,
            mu: f64,
            lambda: f64,
            lr: f64,
            lstm_hidden: usize,
            gen_hidden: usize,
            enc_hidden: usize,
            context_feed_book: bool,
            drop_cancels: bool,
            context_epochs: usize,
            context_patience: usize,
            context_batch: usize,
            context_segments_per_epoch: usize,
            svdd_epochs: usize,
            svdd_patience: usize,
            svdd_batch: usize,
            svdd_segments_per_epoch: usize,
            ridge_alpha: f64,
            synth_instruments: usize,
            synth_days: usize,
            synth_session_ms: i64,
            synth_t0_ms: i64,
            synth_init_price_ticks: i64,
            synth_order_rate_per_s: f64,
            synth_cancel_rate_per_order_s: f64,
            synth_marketable_frac: f64,
            synth_mean_size: f64,
            synth_offset_q: f64,
            synth_anomaly_frac: f64,
            synth_anomaly_jitter: f64,
            synth_anomaly_run_len: usize,
            synth_anomaly_rate_mult: f64,
            synth_anomaly_imbalance: f64,
            synth_anomaly_marketable_mult: f64,
            synth_label_coupling: f64,
        }
    };
}

macro_rules! key_list {
    ($($field:ident : $ty:ident),+ $(,)?) => {
        /// Every accepted configuration key, in canonical order; the CLI
        /// derives one flag per entry.
        pub const CONFIG_KEYS: &[&str] = &[
            $(stringify!($field),)+
            "mask_mode",
            "synth_base_date",
            "jobs",
            "data_dir",
            "out_dir",
        ];
    };
}

config_fields!(key_list);

impl RunConfig {
    /// Applies one `key = value` pair; keys are case-sensitive but `.` and
    /// `-` separators normalize to `_` (so `context.feed_book` and
    /// `--context-feed-book` hit the same field).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), DataError> {
        let key = key.replace(['.', '-'], "_");
        let value = value.trim();
        macro_rules! apply {
            ($($field:ident : $ty:ident),+ $(,)?) => {
                match key.as_str() {
                    $(stringify!($field) => {
                        self.$field = parse_value::<$ty>(stringify!($field), value)?;
                        return Ok(());
                    })+
                    _ => {}
                }
            };
        }
        config_fields!(apply);
        match key.as_str() {
            "mask_mode" => {
                self.mask_mode = MaskMode::parse(value).ok_or_else(|| {
                    DataError::Config(format!(
                        "mask_mode must be hybrid or multiplicative, got {value:?}"
                    ))
                })?;
            }
            "synth_base_date" => {
                parse_iso_date(value)?;
                self.synth_base_date = value.to_string();
            }
            "jobs" => self.jobs = parse_value::<usize>("jobs", value)?,
            "data_dir" => self.data_dir = value.to_string(),
            "out_dir" => self.out_dir = value.to_string(),
            other => {
                return Err(DataError::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Parses a flat `key = value` file body over the current values.
    /// `#`-comments and blank lines are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), DataError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(DataError::Parse {
                    line: lineno + 1,
                    message: format!("expected key = value, got {line:?}"),
                });
            };
            self.set(key.trim(), value).map_err(|e| DataError::Parse {
                line: lineno + 1,
                message: format!("{e}"),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.delta_t_ms <= 0 {
            return Err(DataError::Config("delta_t_ms must be positive".into()));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(DataError::Config("mu must lie in (0, 1]".into()));
        }
        if !(self.mask_w > 0.0 && self.mask_w < 0.5) {
            return Err(DataError::Config("mask_w must lie in (0, 0.5)".into()));
        }
        if self.lambda < 0.0 {
            return Err(DataError::Config("lambda must be nonnegative".into()));
        }
        if self.lr <= 0.0 {
            return Err(DataError::Config("lr must be positive".into()));
        }
        if self.k_levels == 0 || self.d_e == 0 || self.heads == 0 || self.l_max == 0 {
            return Err(DataError::Config("model dimensions must be positive".into()));
        }
        if self.m_history == 0 {
            return Err(DataError::Config("m_history must be positive".into()));
        }
        self.synth().validate()?;
        Ok(())
    }

    /// Canonical text over the semantic keys, in a fixed order.
    pub fn canonical_string(&self) -> String {
        let mut out = String::from("microflow-config-v1\n");
        macro_rules! emit {
            ($($field:ident : $ty:ident),+ $(,)?) => {
                $(out.push_str(&format!("{} = {}\n", stringify!($field), self.$field));)+
            };
        }
        config_fields!(emit);
        out.push_str(&format!("mask_mode = {}\n", self.mask_mode.as_str()));
        out.push_str(&format!("synth_base_date = {}\n", self.synth_base_date));
        out
    }

    /// 16-hex-digit provenance stamp.
    pub fn config_hash(&self) -> String {
        hex64(fnv1a64(self.canonical_string().as_bytes()))
    }

    pub fn context(&self) -> ContextConfig {
        ContextConfig {
            k_levels: self.k_levels,
            tick: self.tick,
            m_history: self.m_history,
            lstm_hidden: self.lstm_hidden,
            gen_hidden: self.gen_hidden,
            feed_book: self.context_feed_book,
        }
    }

    pub fn extractor(&self) -> ExtractorConfig {
        ExtractorConfig {
            d_e: self.d_e,
            heads: self.heads,
            l_max: self.l_max,
            mask_w: self.mask_w,
            mask_mode: self.mask_mode,
            enc_hidden: self.enc_hidden,
            context_dim: 4 * self.k_levels + 1,
        }
    }

    pub fn synth(&self) -> SynthConfig {
        let base_date = parse_iso_date(&self.synth_base_date)
            .expect("validated at assignment");
        SynthConfig {
            instruments: self.synth_instruments,
            days: self.synth_days,
            session_ms: self.synth_session_ms,
            delta_t_ms: self.delta_t_ms,
            t0_ms: self.synth_t0_ms,
            init_price_ticks: self.synth_init_price_ticks,
            order_rate_per_s: self.synth_order_rate_per_s,
            cancel_rate_per_order_s: self.synth_cancel_rate_per_order_s,
            marketable_frac: self.synth_marketable_frac,
            mean_size: self.synth_mean_size,
            offset_q: self.synth_offset_q,
            anomaly_frac: self.synth_anomaly_frac,
            anomaly_jitter: self.synth_anomaly_jitter,
            anomaly_run_len: self.synth_anomaly_run_len,
            anomaly_rate_mult: self.synth_anomaly_rate_mult,
            anomaly_imbalance: self.synth_anomaly_imbalance,
            anomaly_marketable_mult: self.synth_anomaly_marketable_mult,
            label_coupling: self.synth_label_coupling,
            base_date,
        }
    }

    pub fn context_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.context_epochs,
            patience: self.context_patience,
            batch: self.context_batch,
            segments_per_epoch: self.context_segments_per_epoch,
            lr: self.lr,
            seed: self.seed,
        }
    }

    pub fn svdd_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.svdd_epochs,
            patience: self.svdd_patience,
            batch: self.svdd_batch,
            segments_per_epoch: self.svdd_segments_per_epoch,
            lr: self.lr,
            seed: self.seed,
        }
    }

    pub fn segments_per_day(&self) -> usize {
        ((self.synth_session_ms + self.delta_t_ms - 1) / self.delta_t_ms) as usize
    }
}

fn parse_iso_date(s: &str) -> Result<(i32, u32, u32), DataError> {
    let parts: Vec<&str> = s.split('-').collect();
    let bad = || DataError::Config(format!("expected ISO date YYYY-MM-DD, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let y: i32 = parts[0].parse().map_err(|_| bad())?;
    let m: u32 = parts[1].parse().map_err(|_| bad())?;
    let d: u32 = parts[2].parse().map_err(|_| bad())?;
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return Err(bad());
    }
    Ok((y, m, d))
}

trait FromConfigValue: Sized {
    fn parse_config(value: &str) -> Option<Self>;
}

macro_rules! via_fromstr {
    ($($ty:ty),+) => {
        $(impl FromConfigValue for $ty {
            fn parse_config(value: &str) -> Option<Self> {
                value.parse().ok()
            }
        })+
    };
}

via_fromstr!(u64, i64, usize, f64);

impl FromConfigValue for bool {
    fn parse_config(value: &str) -> Option<Self> {
        match value {
            "true" | "1" | "yes" | "on" => Some(true),
            "false" | "0" | "no" | "off" => Some(false),
            _ => None,
        }
    }
}

fn parse_value<T: FromConfigValue>(key: &str, value: &str) -> Result<T, DataError> {
    T::parse_config(value)
        .ok_or_else(|| DataError::Config(format!("invalid value {value:?} for {key}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn set_by_normalized_keys() {
        let mut cfg = RunConfig::default();
        cfg.set("delta-t-ms", "2000").unwrap();
        cfg.set("context.feed_book", "true").unwrap();
        cfg.set("mask_mode", "multiplicative").unwrap();
        assert_eq!(cfg.delta_t_ms, 2000);
        assert!(cfg.context_feed_book);
        assert_eq!(cfg.mask_mode, MaskMode::Multiplicative);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("no_such_key", "1").unwrap_err();
        assert!(format!("{err}").contains("no_such_key"));
    }

    #[test]
    fn text_parsing_with_comments() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\nmu = 0.05\nseed = 7\nmask_w = 0.3\n").unwrap();
        assert_eq!(cfg.mu, 0.05);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mask_w, 0.3);
        let err = cfg.apply_text("not a pair").unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 1, .. }));
    }

    #[test]
    fn validation_ranges() {
        let mut cfg = RunConfig::default();
        cfg.mu = 0.0;
        assert!(cfg.validate().is_err());
        cfg.mu = 1.0;
        cfg.mask_w = 0.5;
        assert!(cfg.validate().is_err());
        cfg.mask_w = 0.49;
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_covers_semantics_not_runtime() {
        let base = RunConfig::default();
        let h0 = base.config_hash();
        assert_eq!(h0.len(), 16);

        let mut runtime = base.clone();
        runtime.jobs = 8;
        runtime.out_dir = "elsewhere".to_string();
        assert_eq!(runtime.config_hash(), h0);

        let mut semantic = base.clone();
        semantic.mu = 0.03;
        assert_ne!(semantic.config_hash(), h0);
    }

    #[test]
    fn every_listed_key_is_settable() {
        let mut cfg = RunConfig::default();
        for key in CONFIG_KEYS {
            // A bogus value must fail as "invalid value", never as an
            // unknown key; string-typed keys accept anything.
            match cfg.set(key, "zz-bogus") {
                Ok(()) => {}
                Err(e) => {
                    let msg = format!("{e}");
                    assert!(
                        msg.contains("invalid value") || msg.contains("expected ISO date")
                            || msg.contains("mask_mode"),
                        "key {key}: unexpected error {msg}"
                    );
                }
            }
        }
    }

    #[test]
    fn derived_configs_carry_fields() {
        let mut cfg = RunConfig::default();
        cfg.set("k_levels", "7").unwrap();
        cfg.set("m_history", "13").unwrap();
        let ctx = cfg.context();
        assert_eq!(ctx.k_levels, 7);
        assert_eq!(ctx.m_history, 13);
        let ext = cfg.extractor();
        assert_eq!(ext.context_dim, 4 * 7 + 1);
        let synth = cfg.synth();
        assert_eq!(synth.delta_t_ms, cfg.delta_t_ms);
        assert_eq!(synth.base_date, (2024, 1, 1));
    }
}

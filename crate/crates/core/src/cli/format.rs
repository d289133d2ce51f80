//! CSV result rows and their number format.

use std::io::Write;

use crate::analysis::PerfPoint;
use crate::channel::ChannelParams;
use crate::detectors::{DetectorKind, Threshold};
use crate::montecarlo::SimResult;
use crate::sensing::SensingModel;

/// Output columns, in order.
pub const COLUMNS: [&str; 22] = [
    "experiment",
    "detector",
    "scheme",
    "levels",
    "gain",
    "noise",
    "slots",
    "sensors",
    "threshold",
    "threshold_global",
    "pfa",
    "pd",
    "pm",
    "method",
    "ci_pfa",
    "ci_pm",
    "trials",
    "seed",
    "s",
    "exponent0",
    "exponent1",
    "status",
];

pub const NA: &str = "NA";

/// Magnitudes below this print as a sentinel.
pub const TINY: f64 = 1e-300;

/// Decimal rendering with 12 significant digits and trailing zeros
/// removed. Never uses an exponent.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return NA.into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() < TINY {
        return if v > 0.0 { "<1e-300".into() } else { ">-1e-300".into() };
    }
    let sci = format!("{:.11e}", v.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let mut out = String::new();
    if v < 0.0 {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            out.push_str(&digits);
            out.extend(std::iter::repeat_n('0', int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    if out.contains('.') {
        let trimmed = out.trim_end_matches('0').trim_end_matches('.').len();
        out.truncate(trimmed);
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| NA.into())
}

fn fmt_count(g: i64) -> String {
    if g == i64::MAX {
        "inf".into()
    } else {
        g.to_string()
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub detector: String,
    pub scheme: String,
    pub levels: usize,
    pub gain: f64,
    pub noise: f64,
    pub slots: usize,
    pub sensors: usize,
    pub threshold: String,
    pub threshold_global: String,
    pub pfa: Option<f64>,
    pub pd: Option<f64>,
    pub pm: Option<f64>,
    pub method: String,
    pub ci_pfa: Option<f64>,
    pub ci_pm: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub s: Option<f64>,
    pub exponent0: Option<f64>,
    pub exponent1: Option<f64>,
    pub status: String,
}

impl Row {
    /// Row with the setting filled in and every result column empty.
    pub fn new(experiment: &str, kind: Option<DetectorKind>, model: &SensingModel, params: &ChannelParams) -> Self {
        Self {
            experiment: experiment.into(),
            detector: kind.map_or(NA.into(), |k| k.name().into()),
            scheme: kind.map_or(NA.into(), |k| k.scheme().as_str().into()),
            levels: model.levels(),
            gain: params.gain(),
            noise: params.noise(),
            slots: params.slots(),
            sensors: params.sensors(),
            threshold: NA.into(),
            threshold_global: NA.into(),
            pfa: None,
            pd: None,
            pm: None,
            method: NA.into(),
            ci_pfa: None,
            ci_pm: None,
            trials: None,
            seed: None,
            s: None,
            exponent0: None,
            exponent1: None,
            status: "ok".into(),
        }
    }

    pub fn threshold(mut self, t: Threshold) -> Self {
        match t {
            Threshold::Llr(v) => self.threshold = fmt_num(v),
            Threshold::Count(g) => self.threshold = fmt_count(g),
            Threshold::TwoStage { local, global } => {
                self.threshold = fmt_count(local);
                self.threshold_global = global.to_string();
            }
        }
        self
    }

    pub fn llr_threshold(mut self, gamma: f64) -> Self {
        self.threshold = fmt_num(gamma);
        self
    }

    pub fn analytic(mut self, p: &PerfPoint) -> Self {
        self = self.threshold(p.threshold);
        self.pfa = Some(p.pfa);
        self.pd = Some(p.pd);
        self.pm = Some(p.pm);
        self.method = p.method.as_str().into();
        self
    }

    pub fn simulated(mut self, r: &SimResult) -> Self {
        self = self.threshold(r.threshold);
        self.pfa = Some(r.pfa_hat);
        self.pd = Some(1.0 - r.pm_hat);
        self.pm = Some(r.pm_hat);
        self.method = "montecarlo".into();
        self.ci_pfa = Some(r.ci_pfa);
        self.ci_pm = Some(r.ci_pm);
        self.trials = Some(r.trials);
        self.seed = Some(r.seed);
        self
    }

    pub fn status(mut self, status: &str) -> Self {
        self.status = status.into();
        self
    }

    pub fn fields(&self) -> [String; 22] {
        [
            self.experiment.clone(),
            self.detector.clone(),
            self.scheme.clone(),
            self.levels.to_string(),
            fmt_num(self.gain),
            fmt_num(self.noise),
            self.slots.to_string(),
            self.sensors.to_string(),
            self.threshold.clone(),
            self.threshold_global.clone(),
            fmt_opt(self.pfa),
            fmt_opt(self.pd),
            fmt_opt(self.pm),
            self.method.clone(),
            fmt_opt(self.ci_pfa),
            fmt_opt(self.ci_pm),
            self.trials.map_or(NA.into(), |t| t.to_string()),
            self.seed.map_or(NA.into(), |t| t.to_string()),
            fmt_opt(self.s),
            fmt_opt(self.exponent0),
            fmt_opt(self.exponent1),
            self.status.clone(),
        ]
    }
}

/// Writes the header and all rows.
pub fn write_csv<W: Write>(out: W, rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_rendering() {
        assert_eq!(fmt_num(0.05), "0.05");
        assert_eq!(fmt_num(15.0), "15");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_num(123456789012345.0), "123456789012000");
        assert_eq!(fmt_num(1.5e-7), "0.00000015");
        assert_eq!(fmt_num(1e6), "1000000");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
    }

    #[test]
    fn sentinels() {
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_num(f64::NAN), "NA");
        assert_eq!(fmt_num(1e-301), "<1e-300");
        assert_eq!(fmt_num(-1e-310), ">-1e-300");
        let s = fmt_num(1e-300);
        assert!(s.starts_with("0.000") && s.ends_with('1') && !s.contains('e'));
        assert_eq!(s.len(), 302);
    }

    #[test]
    fn header_is_stable() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "experiment,detector,scheme,levels,gain,noise,slots,sensors,threshold,threshold_global,\
             pfa,pd,pm,method,ci_pfa,ci_pm,trials,seed,s,exponent0,exponent1,status\n"
        );
    }

    #[test]
    fn threshold_columns() {
        let m = SensingModel::ideal(2).unwrap();
        let p = ChannelParams::steady(1.0, 1.0, 1, 3).unwrap();
        let r = Row::new("x", Some(DetectorKind::TwoStage), &m, &p).threshold(Threshold::TwoStage { local: 4, global: 1 });
        assert_eq!((r.threshold.as_str(), r.threshold_global.as_str()), ("4", "1"));
        let r = Row::new("x", Some(DetectorKind::Mrc), &m, &p).threshold(Threshold::Count(i64::MAX));
        assert_eq!(r.threshold, "inf");
        assert_eq!(r.scheme, "DTM");
    }
}

//! Chain traces (per-round tipset block counts), network parameters, and
//! calculator configuration.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};

/// Ordered per-round block counts of an observed heaviest chain. Rounds are
/// consecutive with no gaps; a count of 0 denotes a null tipset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainTrace {
    start_round: i64,
    counts: Vec<u64>,
}

/// Wire form of the JSON trace format.
#[derive(Serialize, Deserialize)]
struct TraceJson {
    start_round: i64,
    counts: Vec<i64>,
}

/// Input encodings accepted by [`parse_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Json,
}

impl ChainTrace {
    pub fn new(start_round: i64, counts: Vec<u64>) -> Self {
        ChainTrace {
            start_round,
            counts,
        }
    }

    pub fn start_round(&self) -> i64 {
        self.start_round
    }

    /// Last round covered by the trace.
    pub fn end_round(&self) -> i64 {
        self.start_round + self.counts.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Block count at `round`; errors outside the covered range.
    pub fn count_at(&self, round: i64) -> Result<u64> {
        if round < self.start_round || round > self.end_round() {
            return Err(Error::Range(format!(
                "round {round} outside trace [{}, {}]",
                self.start_round,
                self.end_round()
            )));
        }
        Ok(self.counts[(round - self.start_round) as usize])
    }

    /// Sum of block counts over rounds `j..=m`.
    pub fn window_sum(&self, j: i64, m: i64) -> Result<u64> {
        if j > m {
            return Err(Error::Range(format!("window [{j}, {m}] is inverted")));
        }
        if j < self.start_round || m > self.end_round() {
            return Err(Error::Range(format!(
                "window [{j}, {m}] outside trace [{}, {}]",
                self.start_round,
                self.end_round()
            )));
        }
        let a = (j - self.start_round) as usize;
        let b = (m - self.start_round) as usize;
        Ok(self.counts[a..=b].iter().sum())
    }

    /// Writes the CSV form: a `round,blocks` header then one row per round.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "round,blocks")?;
        for (i, count) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.start_round + i as i64, count)?;
        }
        Ok(())
    }

    /// Writes the JSON form: `{"start_round": <int>, "counts": [<int>, ...]}`.
    pub fn write_json(&self, w: impl Write) -> Result<()> {
        let wire = TraceJson {
            start_round: self.start_round,
            counts: self.counts.iter().map(|&c| c as i64).collect(),
        };
        serde_json::to_writer(w, &wire)
            .map_err(|e| Error::Format(format!("json serialization failed: {e}")))
    }
}

/// Parses and validates a trace from `input` in the given format.
pub fn parse_trace(input: impl Read, format: TraceFormat) -> Result<ChainTrace> {
    match format {
        TraceFormat::Csv => parse_csv(input),
        TraceFormat::Json => parse_json(input),
    }
}

fn parse_csv(input: impl Read) -> Result<ChainTrace> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::Format("empty input".into())),
    };
    if header.trim_end_matches('\r').trim() != "round,blocks" {
        return Err(Error::Format(format!(
            "line 1: expected header 'round,blocks', got '{}'",
            header.trim_end()
        )));
    }
    let mut start_round = None;
    let mut counts: Vec<u64> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (round_str, count_str) = line.split_once(',').ok_or_else(|| {
            Error::Format(format!("line {lineno}: expected '<round>,<blocks>'"))
        })?;
        let round: i64 = round_str.trim().parse().map_err(|_| {
            Error::Format(format!("line {lineno}: invalid round '{round_str}'"))
        })?;
        let count: i64 = count_str.trim().parse().map_err(|_| {
            Error::Format(format!("line {lineno}: invalid block count '{count_str}'"))
        })?;
        if count < 0 {
            return Err(Error::Format(format!(
                "line {lineno}: negative block count {count}"
            )));
        }
        match start_round {
            None => start_round = Some(round),
            Some(start) => {
                let expected = start + counts.len() as i64;
                if round > expected {
                    return Err(Error::Gap(expected));
                }
                if round < expected {
                    return Err(Error::Format(format!(
                        "line {lineno}: round {round} is not ascending (expected {expected})"
                    )));
                }
            }
        }
        counts.push(count as u64);
    }
    match start_round {
        None => Err(Error::Format("no data rows".into())),
        Some(start) => Ok(ChainTrace::new(start, counts)),
    }
}

fn parse_json(input: impl Read) -> Result<ChainTrace> {
    let wire: TraceJson = serde_json::from_reader(input)
        .map_err(|e| Error::Format(format!("invalid json trace: {e}")))?;
    if wire.counts.is_empty() {
        return Err(Error::Format("no counts".into()));
    }
    let mut counts = Vec::with_capacity(wire.counts.len());
    for (i, &c) in wire.counts.iter().enumerate() {
        if c < 0 {
            return Err(Error::Format(format!(
                "counts[{i}]: negative block count {c}"
            )));
        }
        counts.push(c as u64);
    }
    Ok(ChainTrace::new(wire.start_round, counts))
}

/// Network-level assumptions: expected block production per round, the
/// Byzantine power fraction, and how far back the lead process may start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkParams {
    pub blocks_per_round_target: f64,
    pub byzantine_fraction: f64,
    pub history_window: u64,
}

impl NetworkParams {
    pub fn new(
        blocks_per_round_target: f64,
        byzantine_fraction: f64,
        history_window: u64,
    ) -> Result<Self> {
        if !blocks_per_round_target.is_finite() || blocks_per_round_target <= 0.0 {
            return Err(Error::Domain(format!(
                "blocks-per-round target must be positive, got {blocks_per_round_target}"
            )));
        }
        if !byzantine_fraction.is_finite() || !(0.0..1.0).contains(&byzantine_fraction) {
            return Err(Error::Domain(format!(
                "byzantine fraction must be in [0, 1), got {byzantine_fraction}"
            )));
        }
        if history_window == 0 {
            return Err(Error::Domain("history window must be >= 1".into()));
        }
        Ok(NetworkParams {
            blocks_per_round_target,
            byzantine_fraction,
            history_window,
        })
    }

    /// Expected adversarial blocks per round, f * e.
    pub fn adversarial_rate(&self) -> f64 {
        self.byzantine_fraction * self.blocks_per_round_target
    }

    /// Expected honest blocks per round, (1 - f) * e.
    pub fn honest_rate(&self) -> f64 {
        (1.0 - self.byzantine_fraction) * self.blocks_per_round_target
    }
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            blocks_per_round_target: 5.0,
            byzantine_fraction: 0.3,
            history_window: 900,
        }
    }
}

/// Truncation bounds and the early-stop probability floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationConfig {
    /// Largest advantage k materialized for the lead and recent-past pmfs.
    pub max_k_lb: usize,
    /// Largest advantage k materialized for the future pmf.
    pub max_k_m: usize,
    /// Longest lead-attack window, in rounds before the target round.
    pub max_i_l: usize,
    /// Longest future horizon, in rounds past the current round.
    pub max_i_m: usize,
    /// Probabilities below this magnitude are treated as zero.
    pub early_stop_floor: f64,
}

impl TruncationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_k_lb == 0 || self.max_k_m == 0 || self.max_i_l == 0 || self.max_i_m == 0 {
            return Err(Error::Domain("truncation bounds must be >= 1".into()));
        }
        if !(self.early_stop_floor > 0.0 && self.early_stop_floor < 1.0) {
            return Err(Error::Domain(format!(
                "early-stop floor must be in (0, 1), got {}",
                self.early_stop_floor
            )));
        }
        Ok(())
    }
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            max_k_lb: 400,
            max_k_m: 100,
            max_i_l: 25,
            max_i_m: 100,
            early_stop_floor: 1e-25,
        }
    }
}

/// Which observer the calculation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum View {
    Node,
    Actor,
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            View::Node => write!(f, "node"),
            View::Actor => write!(f, "actor"),
        }
    }
}

/// One evaluated (target round, current round) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub target_round: i64,
    pub current_round: i64,
    pub good_advantage: u64,
    pub error_probability: f64,
    pub view: View,
}

/// Per-round error-probability bounds over a trace, sorted by round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FinalityReport {
    pub entries: Vec<ReportEntry>,
}

impl FinalityReport {
    /// Median error probability across all entries; `None` when empty.
    pub fn median_error(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        let mut values: Vec<f64> = self.entries.iter().map(|e| e.error_probability).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len();
        Some(if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_csv_basic() {
        let trace = parse_trace("round,blocks\n100,5\n101,4".as_bytes(), TraceFormat::Csv).unwrap();
        assert_eq!(trace.start_round(), 100);
        assert_eq!(trace.counts(), &[5, 4]);
    }

    #[test]
    fn parse_csv_accepts_crlf_and_blank_tail() {
        let trace = parse_trace(
            "round,blocks\r\n100,5\r\n101,4\r\n".as_bytes(),
            TraceFormat::Csv,
        )
        .unwrap();
        assert_eq!(trace.counts(), &[5, 4]);
    }

    #[test]
    fn parse_csv_gap_names_missing_round() {
        let err = parse_trace("round,blocks\n100,5\n102,4".as_bytes(), TraceFormat::Csv)
            .unwrap_err();
        match err {
            Error::Gap(round) => assert_eq!(round, 101),
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn parse_csv_rejects_negative_count() {
        let err =
            parse_trace("round,blocks\n100,-1".as_bytes(), TraceFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn parse_csv_rejects_empty_and_headerless() {
        assert!(matches!(
            parse_trace("".as_bytes(), TraceFormat::Csv),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_trace("round,blocks\n".as_bytes(), TraceFormat::Csv),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_trace("100,5\n101,4".as_bytes(), TraceFormat::Csv),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn parse_csv_rejects_non_integer_count() {
        assert!(matches!(
            parse_trace("round,blocks\n100,1.5".as_bytes(), TraceFormat::Csv),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn parse_json_basic() {
        let trace = parse_trace(
            r#"{"start_round": 7, "counts": [3, 0, 5]}"#.as_bytes(),
            TraceFormat::Json,
        )
        .unwrap();
        assert_eq!(trace.start_round(), 7);
        assert_eq!(trace.counts(), &[3, 0, 5]);
        assert!(parse_trace(
            r#"{"start_round": 7, "counts": [3, -1]}"#.as_bytes(),
            TraceFormat::Json
        )
        .is_err());
    }

    #[test]
    fn csv_round_trips() {
        let trace = ChainTrace::new(-3, vec![0, 2, 7, 0, 1]);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let parsed = parse_trace(buf.as_slice(), TraceFormat::Csv).unwrap();
        assert_eq!(parsed, trace);
    }

    #[test]
    fn json_round_trips() {
        let trace = ChainTrace::new(100, vec![5, 4, 6]);
        let mut buf = Vec::new();
        trace.write_json(&mut buf).unwrap();
        let parsed = parse_trace(buf.as_slice(), TraceFormat::Json).unwrap();
        assert_eq!(parsed, trace);
    }

    #[test]
    fn window_sum_basics() {
        let trace = ChainTrace::new(10, vec![5, 4, 6]);
        assert_eq!(trace.window_sum(11, 11).unwrap(), 4);
        assert_eq!(trace.window_sum(10, 12).unwrap(), 15);
        let zeros = ChainTrace::new(0, vec![0; 8]);
        assert_eq!(zeros.window_sum(2, 6).unwrap(), 0);
    }

    #[test]
    fn window_sum_rejects_out_of_bounds() {
        let trace = ChainTrace::new(10, vec![5, 4, 6]);
        assert!(matches!(trace.window_sum(9, 11), Err(Error::Range(_))));
        assert!(matches!(trace.window_sum(11, 13), Err(Error::Range(_))));
        assert!(matches!(trace.window_sum(12, 11), Err(Error::Range(_))));
    }

    #[test]
    fn window_sum_splits_additively() {
        let trace = ChainTrace::new(0, vec![3, 1, 4, 1, 5, 9, 2, 6]);
        for p in 0..7 {
            let whole = trace.window_sum(0, 7).unwrap();
            let left = trace.window_sum(0, p).unwrap();
            let right = trace.window_sum(p + 1, 7).unwrap();
            assert_eq!(whole, left + right);
        }
    }

    #[test]
    fn params_validation() {
        assert!(NetworkParams::new(5.0, 0.3, 900).is_ok());
        assert!(NetworkParams::new(0.0, 0.3, 900).is_err());
        assert!(NetworkParams::new(5.0, 1.0, 900).is_err());
        assert!(NetworkParams::new(5.0, -0.1, 900).is_err());
        assert!(NetworkParams::new(5.0, 0.3, 0).is_err());
        let p = NetworkParams::default();
        assert_eq!(p.blocks_per_round_target, 5.0);
        assert_eq!(p.byzantine_fraction, 0.3);
        assert_eq!(p.history_window, 900);
        assert!((p.adversarial_rate() - 1.5).abs() < 1e-15);
        assert!((p.honest_rate() - 3.5).abs() < 1e-15);
    }

    #[test]
    fn truncation_defaults_and_validation() {
        let t = TruncationConfig::default();
        assert_eq!(t.max_k_lb, 400);
        assert_eq!(t.max_k_m, 100);
        assert_eq!(t.max_i_l, 25);
        assert_eq!(t.max_i_m, 100);
        assert_eq!(t.early_stop_floor, 1e-25);
        assert!(t.validate().is_ok());
        assert!(TruncationConfig {
            early_stop_floor: 0.0,
            ..t
        }
        .validate()
        .is_err());
        assert!(TruncationConfig { max_i_l: 0, ..t }.validate().is_err());
    }

    #[test]
    fn report_median() {
        let mk = |p: f64| ReportEntry {
            target_round: 0,
            current_round: 1,
            good_advantage: 1,
            error_probability: p,
            view: View::Node,
        };
        let report = FinalityReport {
            entries: vec![mk(0.5), mk(0.1), mk(0.9)],
        };
        assert_eq!(report.median_error(), Some(0.5));
        let report = FinalityReport {
            entries: vec![mk(0.1), mk(0.3)],
        };
        assert!((report.median_error().unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(FinalityReport::default().median_error(), None);
    }
}

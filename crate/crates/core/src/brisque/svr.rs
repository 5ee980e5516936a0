//! Epsilon-SVR with an RBF kernel, loaded from the libsvm text model format
//! plus an svm-scale range file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::features::{BrisqueFeatureVector, FEATURE_COUNT};
use super::BrisqueError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRange {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    pub coef: f64,
    pub features: [f64; FEATURE_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub gamma: f64,
    pub rho: f64,
    pub support_vectors: Vec<SupportVector>,
    /// Target interval of the scaling, `(-1, 1)` for BRISQUE models.
    pub target: (f64, f64),
    pub feature_ranges: [FeatureRange; FEATURE_COUNT],
}

fn model_err(line: usize, message: impl Into<String>) -> BrisqueError {
    BrisqueError::Model {
        line,
        message: message.into(),
    }
}

fn range_err(line: usize, message: impl Into<String>) -> BrisqueError {
    BrisqueError::Range {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize, what: &str, err: fn(usize, String) -> BrisqueError) -> Result<f64, BrisqueError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| err(line, format!("bad {what} `{tok}`")))
}

fn parse_index(tok: &str, line: usize, err: fn(usize, String) -> BrisqueError) -> Result<usize, BrisqueError> {
    match tok.parse::<usize>() {
        Ok(i) if (1..=FEATURE_COUNT).contains(&i) => Ok(i),
        _ => Err(err(line, format!("feature index `{tok}` outside 1..={FEATURE_COUNT}"))),
    }
}

fn parse_model_text(text: &str) -> Result<(f64, f64, Vec<SupportVector>), BrisqueError> {
    let (mut svm_type, mut kernel, mut gamma, mut rho, mut total) = (None, None, None, None, None);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut saw_sv = false;
    for (no, line) in lines.by_ref() {
        if line.is_empty() {
            continue;
        }
        if line == "SV" {
            saw_sv = true;
            break;
        }
        let (key, value) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let value = value.trim();
        match key {
            "svm_type" => svm_type = Some(value.to_string()),
            "kernel_type" => kernel = Some(value.to_string()),
            "gamma" => gamma = Some(parse_f64(value, no, "gamma", model_err_s)?),
            "rho" => rho = Some(parse_f64(value, no, "rho", model_err_s)?),
            "total_sv" => {
                total = Some(value.parse::<usize>().map_err(|_| model_err(no, format!("bad total_sv `{value}`")))?)
            }
            // Written by svm-train for classifiers; harmless here.
            "nr_class" | "label" | "nr_sv" | "probA" | "probB" => {}
            other => return Err(model_err(no, format!("unknown header key `{other}`"))),
        }
    }
    match svm_type.as_deref() {
        Some("epsilon_svr") => {}
        Some(other) => return Err(model_err(0, format!("svm_type `{other}` is not epsilon_svr"))),
        None => return Err(model_err(0, "missing svm_type")),
    }
    match kernel.as_deref() {
        Some("rbf") => {}
        Some(other) => return Err(model_err(0, format!("kernel_type `{other}` is not rbf"))),
        None => return Err(model_err(0, "missing kernel_type")),
    }
    let gamma = gamma.ok_or_else(|| model_err(0, "missing gamma"))?;
    let rho = rho.ok_or_else(|| model_err(0, "missing rho"))?;
    let total = total.ok_or_else(|| model_err(0, "missing total_sv"))?;
    if !saw_sv {
        return Err(model_err(0, "missing SV section"));
    }

    let mut svs = Vec::with_capacity(total);
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let coef = parse_f64(toks.next().unwrap_or_default(), no, "coefficient", model_err_s)?;
        let mut features = [0.0; FEATURE_COUNT];
        for tok in toks {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| model_err(no, format!("expected idx:val, got `{tok}`")))?;
            let idx = parse_index(idx, no, model_err_s)?;
            features[idx - 1] = parse_f64(val, no, "feature value", model_err_s)?;
        }
        svs.push(SupportVector { coef, features });
    }
    if svs.len() != total {
        return Err(model_err(0, format!("total_sv is {total} but {} vectors follow", svs.len())));
    }
    if svs.is_empty() {
        return Err(model_err(0, "model has no support vectors"));
    }
    Ok((gamma, rho, svs))
}

fn model_err_s(line: usize, message: String) -> BrisqueError {
    model_err(line, message)
}

fn range_err_s(line: usize, message: String) -> BrisqueError {
    range_err(line, message)
}

fn parse_range_text(text: &str) -> Result<((f64, f64), [FeatureRange; FEATURE_COUNT]), BrisqueError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "x")) => {}
        Some((no, other)) => return Err(range_err(no, format!("expected `x`, got `{other}`"))),
        None => return Err(range_err(0, "empty range file")),
    }
    let (no, target_line) = lines.next().ok_or_else(|| range_err(0, "missing target interval line"))?;
    let t: Vec<&str> = target_line.split_whitespace().collect();
    let [tlo, thi] = t.as_slice() else {
        return Err(range_err(no, "target line must hold two numbers"));
    };
    let target = (
        parse_f64(tlo, no, "target bound", range_err_s)?,
        parse_f64(thi, no, "target bound", range_err_s)?,
    );
    if target.0 >= target.1 {
        return Err(range_err(no, "target lower bound must be below upper bound"));
    }

    let mut ranges: [Option<FeatureRange>; FEATURE_COUNT] = [None; FEATURE_COUNT];
    for (no, line) in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        let [idx, lo, hi] = t.as_slice() else {
            return Err(range_err(no, "expected `<idx> <lower> <upper>`"));
        };
        let idx = parse_index(idx, no, range_err_s)?;
        let (lower, upper) = (parse_f64(lo, no, "lower", range_err_s)?, parse_f64(hi, no, "upper", range_err_s)?);
        if lower >= upper {
            return Err(range_err(no, format!("feature {idx}: lower {lower} is not below upper {upper}")));
        }
        if ranges[idx - 1].is_some() {
            return Err(range_err(no, format!("feature {idx} listed twice")));
        }
        ranges[idx - 1] = Some(FeatureRange { lower, upper });
    }
    let mut out = [FeatureRange { lower: 0.0, upper: 0.0 }; FEATURE_COUNT];
    for (i, r) in ranges.iter().enumerate() {
        out[i] = r.ok_or_else(|| range_err(0, format!("no range for feature {}", i + 1)))?;
    }
    Ok((target, out))
}

impl SvrModel {
    pub fn from_texts(model_text: &str, range_text: &str) -> Result<Self, BrisqueError> {
        let (gamma, rho, support_vectors) = parse_model_text(model_text)?;
        let (target, feature_ranges) = parse_range_text(range_text)?;
        Ok(Self {
            kernel: Kernel::Rbf,
            gamma,
            rho,
            support_vectors,
            target,
            feature_ranges,
        })
    }

    /// The toy model bundled with the crate (two support vectors).
    pub fn toy() -> Self {
        Self::from_texts(TOY_MODEL, TOY_RANGE).expect("bundled toy model parses")
    }

    pub fn to_model_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "svm_type epsilon_svr").unwrap();
        writeln!(s, "kernel_type rbf").unwrap();
        writeln!(s, "gamma {}", self.gamma).unwrap();
        writeln!(s, "total_sv {}", self.support_vectors.len()).unwrap();
        writeln!(s, "rho {}", self.rho).unwrap();
        writeln!(s, "SV").unwrap();
        for sv in &self.support_vectors {
            write!(s, "{}", sv.coef).unwrap();
            for (i, v) in sv.features.iter().enumerate() {
                if *v != 0.0 {
                    write!(s, " {}:{}", i + 1, v).unwrap();
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_range_text(&self) -> String {
        let mut s = format!("x\n{} {}\n", self.target.0, self.target.1);
        for (i, r) in self.feature_ranges.iter().enumerate() {
            writeln!(s, "{} {} {}", i + 1, r.lower, r.upper).unwrap();
        }
        s
    }

    /// Linear map of each feature from its range onto the target interval.
    /// Values outside the range extrapolate.
    pub fn scale(&self, features: &BrisqueFeatureVector) -> [f64; FEATURE_COUNT] {
        let (tlo, thi) = self.target;
        let mut out = [0.0; FEATURE_COUNT];
        for ((o, x), r) in out.iter_mut().zip(features.values()).zip(&self.feature_ranges) {
            *o = tlo + (thi - tlo) * (x - r.lower) / (r.upper - r.lower);
        }
        out
    }
}

pub const TOY_MODEL: &str = include_str!("../../assets/toy_brisque.model");
pub const TOY_RANGE: &str = include_str!("../../assets/toy_brisque.range");

pub fn parse_svr_model(model_path: impl AsRef<Path>, range_path: impl AsRef<Path>) -> Result<SvrModel, BrisqueError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|e| BrisqueError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        })
    };
    SvrModel::from_texts(&read(model_path.as_ref())?, &read(range_path.as_ref())?)
}

/// `Σ_k coef_k exp(−γ ‖x − sv_k‖²) − ρ` on the scaled features.
pub fn brisque_score(features: &BrisqueFeatureVector, model: &SvrModel) -> f64 {
    let x = model.scale(features);
    let mut sum = 0.0;
    for sv in &model.support_vectors {
        let d2: f64 = x.iter().zip(&sv.features).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += sv.coef * (-model.gamma * d2).exp();
    }
    sum - model.rho
}

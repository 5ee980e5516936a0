//! Score aggregation: the per-method mean over a complete rater × product
//! grid, per-product means with standard errors, and the survey report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::manifest::SurveyManifest;
use super::store::effective_ratings;
use super::{MissingCell, RatingRecord, SurveyError};
use crate::prompt::Strategy;
use crate::stats::mean_and_population_std;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Strategy,
    pub mean: f64,
    /// Population standard deviation over all grid cells.
    pub std_dev: f64,
    pub n: usize,
}

/// `S = (1 / |J||K|) Σ_j Σ_k s_jk` over raters J and products K that appear
/// for `method`. Every (j, k) cell must be rated.
pub fn method_score(ratings: &[RatingRecord], method: Strategy) -> Result<MethodScore, SurveyError> {
    let effective = effective_ratings(ratings);
    let mut grid: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut raters = BTreeSet::new();
    let mut products = BTreeSet::new();
    for r in effective.iter().filter(|r| r.method == method) {
        raters.insert(r.rater_id.as_str());
        products.insert(r.product_id.as_str());
        grid.insert((&r.rater_id, &r.product_id), f64::from(r.rating.value()));
    }
    if grid.is_empty() {
        return Err(SurveyError::NoRatings(method));
    }
    let mut missing = Vec::new();
    let mut sum = 0.0;
    let mut values = Vec::with_capacity(raters.len() * products.len());
    for &j in &raters {
        for &k in &products {
            match grid.get(&(j, k)) {
                Some(&s) => {
                    sum += s;
                    values.push(s);
                }
                None => missing.push(MissingCell {
                    rater_id: j.to_string(),
                    product_id: k.to_string(),
                }),
            }
        }
    }
    if !missing.is_empty() {
        return Err(SurveyError::IncompleteGrid { method, missing });
    }
    let n = raters.len() * products.len();
    let (_, std_dev) = mean_and_population_std(&values).expect("non-empty grid");
    Ok(MethodScore {
        method,
        mean: sum / n as f64,
        std_dev,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductScore {
    pub product_id: String,
    pub method: Strategy,
    pub mean: f64,
    /// Population standard deviation over raters divided by √n.
    pub standard_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingProductCell {
    pub product_id: String,
    pub method: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductScores {
    pub cells: Vec<ProductScore>,
    /// (product, method) pairs without any rating, for products that have at
    /// least one rating under some method.
    pub missing: Vec<MissingProductCell>,
}

pub fn per_product_scores(ratings: &[RatingRecord]) -> ProductScores {
    let effective = effective_ratings(ratings);
    let mut cells: BTreeMap<(&str, Strategy), Vec<f64>> = BTreeMap::new();
    for r in &effective {
        cells
            .entry((&r.product_id, r.method))
            .or_default()
            .push(f64::from(r.rating.value()));
    }
    let products: BTreeSet<&str> = effective.iter().map(|r| r.product_id.as_str()).collect();
    let mut out = ProductScores {
        cells: Vec::new(),
        missing: Vec::new(),
    };
    for &p in &products {
        for m in Strategy::ALL {
            match cells.get(&(p, m)) {
                Some(v) => {
                    let (mean, sd) = mean_and_population_std(v).expect("non-empty cell");
                    out.cells.push(ProductScore {
                        product_id: p.to_string(),
                        method: m,
                        mean,
                        standard_error: sd / (v.len() as f64).sqrt(),
                        n: v.len(),
                    });
                }
                None => out.missing.push(MissingProductCell {
                    product_id: p.to_string(),
                    method: m,
                }),
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    /// The complete-grid score, when the grid is complete.
    pub score: Option<MethodScore>,
    pub score_error: Option<String>,
    /// Mean over whatever cells are rated. Not the complete-grid score.
    pub available_cells_mean: Option<f64>,
    pub available_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionCell {
    pub rater_id: String,
    pub product_id: String,
    pub method: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub raters: usize,
    pub products: usize,
    pub expected_cells: usize,
    pub rated_cells: usize,
    pub missing: Vec<CompletionCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub submissions: usize,
    pub effective_ratings: usize,
    pub rater_count: usize,
    pub methods: BTreeMap<Strategy, MethodReport>,
    pub per_product: ProductScores,
    pub completion: Completion,
}

/// Builds the report from every submission. With a manifest, the completion
/// matrix covers all manifest products; otherwise the products seen.
pub fn survey_report(ratings: &[RatingRecord], manifest: Option<&SurveyManifest>) -> SurveyReport {
    let effective = effective_ratings(ratings);
    let raters: BTreeSet<&str> = effective.iter().map(|r| r.rater_id.as_str()).collect();
    let products: BTreeSet<&str> = match manifest {
        Some(m) => m.tasks.iter().map(|t| t.product_id.as_str()).collect(),
        None => effective.iter().map(|r| r.product_id.as_str()).collect(),
    };

    let mut methods = BTreeMap::new();
    for m in Strategy::ALL {
        let values: Vec<f64> = effective
            .iter()
            .filter(|r| r.method == m)
            .map(|r| f64::from(r.rating.value()))
            .collect();
        if values.is_empty() {
            continue;
        }
        let (score, score_error) = match method_score(&effective, m) {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        methods.insert(
            m,
            MethodReport {
                score,
                score_error,
                available_cells_mean: mean_and_population_std(&values).map(|(mean, _)| mean),
                available_cells: values.len(),
            },
        );
    }

    let rated: BTreeSet<(&str, &str, Strategy)> = effective.iter().map(RatingRecord::cell).collect();
    let mut missing = Vec::new();
    for &j in &raters {
        for &k in &products {
            for m in Strategy::ALL {
                if !rated.contains(&(j, k, m)) {
                    missing.push(CompletionCell {
                        rater_id: j.to_string(),
                        product_id: k.to_string(),
                        method: m,
                    });
                }
            }
        }
    }

    SurveyReport {
        submissions: ratings.len(),
        effective_ratings: effective.len(),
        rater_count: raters.len(),
        methods,
        per_product: per_product_scores(&effective),
        completion: Completion {
            raters: raters.len(),
            products: products.len(),
            expected_cells: raters.len() * products.len() * Strategy::ALL.len(),
            rated_cells: rated.len(),
            missing,
        },
    }
}

/// Method / mean score / standard deviation table, three decimals.
pub fn render_score_table(report: &SurveyReport) -> String {
    let mut s = format!("{:<8} {:>10} {:>9}\n", "Method", "Mean score", "Std. dev.");
    for (m, r) in &report.methods {
        match &r.score {
            Some(score) => writeln!(s, "{:<8} {:>10.3} {:>9.3}", m.as_str(), score.mean, score.std_dev).unwrap(),
            None => writeln!(s, "{:<8} {:>10} {:>9}", m.as_str(), "n/a", "n/a").unwrap(),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::Rating;
    use chrono::Utc;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn rec(rater: &str, product: &str, method: Strategy, value: u8) -> RatingRecord {
        RatingRecord {
            rater_id: rater.into(),
            product_id: product.into(),
            method,
            rating: Rating::from_value(value).unwrap(),
            submitted_at: Utc::now(),
        }
    }

    fn grid(values: &[Vec<u8>], method: Strategy) -> Vec<RatingRecord> {
        let mut out = Vec::new();
        for (j, row) in values.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                out.push(rec(&format!("r{j:02}"), &format!("p{k:02}"), method, v));
            }
        }
        out
    }

    #[test]
    fn all_high_is_three() {
        let s = method_score(&grid(&vec![vec![3; 15]; 24], Strategy::Llm), Strategy::Llm).unwrap();
        assert_eq!((s.mean, s.std_dev, s.n), (3.0, 0.0, 360));
    }

    #[test]
    fn two_by_two() {
        let s = method_score(&grid(&[vec![1, 2], vec![2, 3]], Strategy::Pname), Strategy::Pname).unwrap();
        assert_eq!(s.mean, 2.0);
    }

    #[test]
    fn incomplete_grid_lists_cells() {
        let mut g = grid(&[vec![1, 2], vec![2, 3]], Strategy::Llm);
        g.remove(1);
        match method_score(&g, Strategy::Llm) {
            Err(SurveyError::IncompleteGrid { missing, .. }) => {
                assert_eq!(
                    missing,
                    vec![MissingCell {
                        rater_id: "r00".into(),
                        product_id: "p01".into()
                    }]
                );
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(method_score(&g, Strategy::Ptype), Err(SurveyError::NoRatings(_))));
    }

    #[test]
    fn product_cells() {
        let mut r = vec![rec("a", "x", Strategy::Llm, 1), rec("b", "x", Strategy::Llm, 3)];
        r.extend([1, 2, 3].map(|i| rec(&format!("r{i}"), "y", Strategy::Llm, 3)));
        r.push(rec("a", "z", Strategy::Llm, 2));
        let s = per_product_scores(&r);
        let get = |p: &str| s.cells.iter().find(|c| c.product_id == p).unwrap();
        assert_eq!(get("x").mean, 2.0);
        assert!((get("x").standard_error - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((get("y").mean, get("y").standard_error), (3.0, 0.0));
        assert_eq!((get("z").mean, get("z").standard_error, get("z").n), (2.0, 0.0, 1));
        assert_eq!(s.missing.len(), 6);
    }

    #[test]
    fn empty_report() {
        let r = survey_report(&[], None);
        assert_eq!((r.submissions, r.rater_count, r.completion.expected_cells), (0, 0, 0));
        assert!(r.methods.is_empty() && r.per_product.cells.is_empty());
    }

    #[test]
    fn partial_grid_completion() {
        let mut all = Vec::new();
        for m in Strategy::ALL {
            all.extend(grid(&[vec![1, 2], vec![2, 3]], m));
        }
        all.retain(|r| !(r.rater_id == "r01" && r.product_id == "p00" && r.method == Strategy::Ptype));
        let rep = survey_report(&all, None);
        assert_eq!(
            rep.completion.missing,
            vec![CompletionCell {
                rater_id: "r01".into(),
                product_id: "p00".into(),
                method: Strategy::Ptype
            }]
        );
        let ptype = &rep.methods[&Strategy::Ptype];
        assert!(ptype.score.is_none() && ptype.score_error.is_some());
        assert_eq!(ptype.available_cells, 3);
        assert_eq!(rep.methods[&Strategy::Llm].score.as_ref().unwrap().mean, 2.0);
    }

    fn random_grid() -> impl proptest::strategy::Strategy<Value = Vec<Vec<u8>>> {
        (1usize..=24, 1usize..=15).prop_flat_map(|(j, k)| {
            proptest::collection::vec(proptest::collection::vec(1u8..=3, k), j)
        })
    }

    use proptest::strategy::Strategy as _;

    proptest! {
        #[test]
        fn bounded_and_permutation_invariant(g in random_grid(), rot in 0usize..10_000) {
            let mut recs = grid(&g, Strategy::Llm);
            let s = method_score(&recs, Strategy::Llm).unwrap();
            prop_assert!((1.0..=3.0).contains(&s.mean));
            let k = rot % recs.len();
            recs.rotate_left(k);
            recs.reverse();
            prop_assert_eq!(method_score(&recs, Strategy::Llm).unwrap().mean, s.mean);
        }

        #[test]
        fn low_to_high_raises_by_two_over_cells(g in random_grid(), pick in 0usize..10_000) {
            let mut g = g;
            let (rows, cols) = (g.len(), g[0].len());
            let (j, k) = ((pick / cols) % rows, pick % cols);
            g[j][k] = 1;
            let before = method_score(&grid(&g, Strategy::Llm), Strategy::Llm).unwrap().mean;
            g[j][k] = 3;
            let after = method_score(&grid(&g, Strategy::Llm), Strategy::Llm).unwrap().mean;
            prop_assert!((after - before - 2.0 / (rows * cols) as f64).abs() < 1e-12);
        }
    }
}

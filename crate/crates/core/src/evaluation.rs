//! Predictive accuracy and cumulative-residual (CURE) diagnostics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SiteRecord;
use crate::error::{Error, Result};
use crate::model_spec::{build_design, standardize_with, DesignMatrix, ETA_CLAMP};
use crate::sampler::ChainDraws;

fn check_pair(observed: &[u64], predicted: &[f64]) -> Result<()> {
    if observed.len() != predicted.len() {
        return Err(Error::Dimension(format!("{} observations for {} predictions", observed.len(), predicted.len())));
    }
    if observed.is_empty() {
        return Err(Error::Dimension("no observations".into()));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(observed: &[u64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    Ok(observed.iter().zip(predicted).map(|(&y, p)| (y as f64 - p).abs()).sum::<f64>() / observed.len() as f64)
}

/// Root mean squared error.
pub fn rmse(observed: &[u64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    let mse = observed.iter().zip(predicted).map(|(&y, p)| (y as f64 - p).powi(2)).sum::<f64>() / observed.len() as f64;
    Ok(mse.sqrt())
}

/// Seeded random partition into `(train, test)` with
/// `⌊n · (1 − fraction)⌋` test items. Both parts keep the input order.
pub fn train_test_split<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("training fraction must lie in (0, 1), got {fraction}")));
    }
    let n = items.len();
    let n_test = (n as f64 * (1.0 - fraction) + 1e-9).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    idx[..n_test].iter().for_each(|&i| is_test[i] = true);
    let (mut train, mut test) = (Vec::with_capacity(n - n_test), Vec::with_capacity(n_test));
    for (item, t) in items.iter().zip(is_test) {
        if t {
            test.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, test))
}

/// Covariates-only predictions: the posterior mean over every draw of
/// `exp(x_i'b) · E(λ)` for rows of a design standardized with the fit's
/// column statistics.
pub fn predict(chains: &[ChainDraws], x: &DesignMatrix) -> Result<Vec<f64>> {
    let first = chains.first().ok_or_else(|| Error::InsufficientDraws("no chains".into()))?;
    if x.n_cols() != first.n_coef() {
        return Err(Error::Dimension(format!("design has {} columns, fit has {}", x.n_cols(), first.n_coef())));
    }
    let total: usize = chains.iter().map(ChainDraws::n_draws).sum();
    if total == 0 {
        return Err(Error::InsufficientDraws("no draws".into()));
    }
    let mut out = vec![0.0; x.n_rows()];
    for c in chains {
        for k in 0..c.n_draws() {
            let b = c.coefficients(k);
            let e_lambda = c.heterogeneity_mean(k);
            for (i, o) in out.iter_mut().enumerate() {
                let eta: f64 = b.iter().zip(x.row(i)).map(|(b, x)| b * x).sum();
                *o += eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp() * e_lambda;
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= total as f64);
    Ok(out)
}

/// Covariates-only predictions for new records, encoded with the fit's
/// formula and standardized with its training statistics.
pub fn predict_records(chains: &[ChainDraws], records: &[SiteRecord]) -> Result<Vec<f64>> {
    let first = chains.first().ok_or_else(|| Error::InsufficientDraws("no chains".into()))?;
    let x = standardize_with(&build_design(records, &first.formula)?, &first.column_stats)?;
    predict(chains, &x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurePoint {
    pub site_id: String,
    pub covariate: f64,
    pub residual: f64,
    pub cumulative: f64,
    /// Half-width of the 95% band; the band is `[-band, band]`.
    pub band: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CureCurve {
    pub covariate: String,
    pub points: Vec<CurePoint>,
}

impl CureCurve {
    /// Share of points whose cumulative residual lies strictly outside the
    /// band.
    pub fn fraction_outside(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().filter(|p| p.cumulative.abs() > p.band).count() as f64 / self.points.len() as f64
    }

    /// `site_id,covariate,residual,cumulative,lower,upper` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("site_id,covariate,residual,cumulative,lower,upper\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.site_id, p.covariate, p.residual, p.cumulative, -p.band, p.band
            ));
        }
        s
    }

    /// Curve and band polylines over the covariate axis.
    pub fn to_svg(&self, width: f64, height: f64) -> String {
        let margin = 40.0;
        let (x0, x1) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.covariate), b.max(p.covariate)));
        let ymax = self.points.iter().map(|p| p.cumulative.abs().max(p.band)).fold(1e-12, f64::max);
        let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
        let sx = |x: f64| margin + (x - x0) / xspan * (width - 2.0 * margin);
        let sy = |y: f64| height / 2.0 - y / ymax * (height / 2.0 - margin);
        let line = |f: &dyn Fn(&CurePoint) -> f64| {
            self.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.covariate), sy(f(p)))).collect::<Vec<_>>().join(" ")
        };
        format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
                "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
                "<line x1=\"{m}\" y1=\"{mid}\" x2=\"{xr}\" y2=\"{mid}\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n",
                "<polyline fill=\"none\" stroke=\"#c33\" stroke-dasharray=\"6 3\" points=\"{up}\"/>\n",
                "<polyline fill=\"none\" stroke=\"#c33\" stroke-dasharray=\"6 3\" points=\"{lo}\"/>\n",
                "<polyline fill=\"none\" stroke=\"#136\" stroke-width=\"1.5\" points=\"{cu}\"/>\n",
                "<text x=\"{m}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>\n",
                "</svg>\n"
            ),
            w = width,
            h = height,
            m = margin,
            mid = height / 2.0,
            xr = width - margin,
            up = line(&|p| p.band),
            lo = line(&|p| -p.band),
            cu = line(&|p| p.cumulative),
            ty = height - 10.0,
            name = self.covariate
        )
    }
}

/// Cumulative residuals ordered by `covariate` (ties broken by site id),
/// with 95% bands `±1.96 √(S_k (1 − S_k / S_n))` where `S_k` is the
/// cumulative sum of squared residuals. The band closes to zero at the last
/// point. When every residual is zero the bands have zero width.
pub fn cure(
    covariate_name: &str,
    observed: &[u64],
    predicted: &[f64],
    covariate: &[f64],
    site_ids: &[String],
) -> Result<CureCurve> {
    check_pair(observed, predicted)?;
    if covariate.len() != observed.len() || site_ids.len() != observed.len() {
        return Err(Error::Dimension("observed, predicted, covariate and site ids must have equal lengths".into()));
    }
    if let Some(i) = covariate.iter().position(|v| !v.is_finite()) {
        return Err(Error::domain(format!("covariate value of site `{}` is not finite", site_ids[i])));
    }
    let mut order: Vec<usize> = (0..observed.len()).collect();
    order.sort_by(|&a, &b| covariate[a].total_cmp(&covariate[b]).then_with(|| site_ids[a].cmp(&site_ids[b])));
    // summed in plotting order so the last running sum equals it bit for bit
    let total_sq: f64 = order.iter().map(|&i| observed[i] as f64 - predicted[i]).map(|r| r * r).sum();
    if total_sq == 0.0 {
        log::warn!("CURE for `{covariate_name}`: all residuals are zero; bands have zero width");
    }
    let mut cum = 0.0;
    let mut cum_sq = 0.0;
    let points = order
        .iter()
        .map(|&i| {
            let r = observed[i] as f64 - predicted[i];
            cum += r;
            cum_sq += r * r;
            let var = if total_sq > 0.0 { (cum_sq * (1.0 - cum_sq / total_sq)).max(0.0) } else { 0.0 };
            CurePoint {
                site_id: site_ids[i].clone(),
                covariate: covariate[i],
                residual: r,
                cumulative: cum,
                band: 1.96 * var.sqrt(),
            }
        })
        .collect();
    Ok(CureCurve { covariate: covariate_name.to_string(), points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn hand_vectors() {
        assert_eq!(mae(&[0, 2], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0, 2], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((rmse(&[0, 4], &[0.0, 0.0]).unwrap() - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(mae(&[0, 4], &[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(mae(&[3, 1], &[3.0, 1.0]).unwrap(), 0.0);
        assert!(mae(&[1], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let rows: Vec<usize> = (0..596).collect();
        let (tr, te) = train_test_split(&rows, 0.8, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (477, 119));
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort();
        assert_eq!(all, rows);
        assert_eq!(train_test_split(&rows, 0.8, 7).unwrap(), (tr, te));
        assert!(train_test_split(&rows, 1.0, 7).is_err());
        assert!(train_test_split(&rows, 0.0, 7).is_err());
    }

    #[test]
    fn cure_examples() {
        let c = cure("x", &[1, 0, 1, 0], &[0.0, 1.0, 0.0, 1.0], &[1.0, 2.0, 3.0, 4.0], &ids(4)).unwrap();
        let cum: Vec<f64> = c.points.iter().map(|p| p.cumulative).collect();
        assert_eq!(cum, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(c.points[3].band, 0.0);

        let flat = cure("x", &[2, 3], &[2.0, 3.0], &[0.0, 1.0], &ids(2)).unwrap();
        assert!(flat.points.iter().all(|p| p.cumulative == 0.0 && p.band == 0.0));

        let one = cure("x", &[3], &[1.0], &[5.0], &ids(1)).unwrap();
        assert_eq!((one.points[0].cumulative, one.points[0].band), (2.0, 0.0));
    }

    #[test]
    fn cure_ties_broken_by_site_id() {
        let sites = vec!["b".to_string(), "a".to_string()];
        let c = cure("x", &[1, 0], &[0.0, 0.0], &[1.0, 1.0], &sites).unwrap();
        assert_eq!(c.points[0].site_id, "a");
        assert!(c.to_svg(400.0, 300.0).contains("<polyline"));
        assert_eq!(c.to_csv().lines().count(), 3);
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in prop::collection::vec((0u64..50, 0.0f64..50.0), 1..60)) {
            let (y, p): (Vec<u64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(rmse(&y, &p).unwrap() >= mae(&y, &p).unwrap() - 1e-12);
        }

        #[test]
        fn cure_terminal_value_and_monotone_invariance(
            pairs in prop::collection::vec((0u64..20, 0.0f64..10.0, -5.0f64..5.0), 1..40)
        ) {
            let y: Vec<u64> = pairs.iter().map(|t| t.0).collect();
            let p: Vec<f64> = pairs.iter().map(|t| t.1).collect();
            let x: Vec<f64> = pairs.iter().map(|t| t.2).collect();
            let s = ids(y.len());
            let c = cure("x", &y, &p, &x, &s).unwrap();
            let total: f64 = c.points.iter().map(|q| q.residual).sum();
            prop_assert_eq!(c.points.last().unwrap().cumulative, total);
            prop_assert_eq!(c.points.last().unwrap().band, 0.0);
            let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let d = cure("x", &y, &p, &ex, &s).unwrap();
            let a: Vec<f64> = c.points.iter().map(|q| q.cumulative).collect();
            let b: Vec<f64> = d.points.iter().map(|q| q.cumulative).collect();
            prop_assert_eq!(a, b);
        }
    }
}

//! Benchmark harness: mean PSNR/SSIM per method and sampling interval over a
//! synthetic test split.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::baselines::{sart_tv, SartConfig};
use crate::data::{ImageSlice, Volume};
use crate::error::{arg_err, Error, Result};
use crate::geometry::{fbp, Sinogram};
use crate::metrics::{psnr, ssim};
use crate::nn::{LsAae, Network};
use crate::pipeline::{acquire_volume, fbp_volume, restore_sinograms, restore_slices, Acquisition, Geometry};
use crate::scalar::Scalar;
use crate::train::Restorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Fbp,
    SartTv,
    InterpFbp,
    /// Sinogram network followed by FBP.
    RadonOnly,
    /// Image network applied to sparse-view FBP.
    ImageOnly,
    /// Sinogram network, FBP, then image network.
    Dual,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Fbp, Method::SartTv, Method::InterpFbp, Method::RadonOnly, Method::ImageOnly, Method::Dual];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::SartTv => "sart-tv",
            Method::InterpFbp => "interp-fbp",
            Method::RadonOnly => "radon-only",
            Method::ImageOnly => "image-only",
            Method::Dual => "dual",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Trained models for one sampling interval; any may be absent.
#[derive(Debug, Clone, Default)]
pub struct IntervalModels<T: Scalar> {
    pub lae: Option<Network<T>>,
    pub dual: Option<LsAae<T>>,
    pub image_only: Option<LsAae<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub full_views: usize,
    /// Image interval of the five-slice networks; slices `2T..n-2T` are scored.
    pub t: usize,
    pub sart: SartConfig,
    pub batch: usize,
    /// Record wall-clock runtime; off keeps the CSV byte-identical across runs.
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { full_views: 180, t: 1, sart: SartConfig::default(), batch: 4, timing: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub interval: usize,
    pub n_slices: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub runtime_s: f64,
    pub config_hash: String,
    /// Some slice matched its reference exactly, so the PSNR mean is infinite.
    pub psnr_infinite: bool,
}

pub const CSV_HEADER: &str = "method,interval,n_slices,psnr_mean,psnr_std,ssim_mean,ssim_std,runtime_s,config_hash";

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

/// Scores predictions against references after clipping both to `[0, 1]`.
pub fn summarize<T: Scalar>(
    method: &str,
    interval: usize,
    preds: &[ImageSlice<T>],
    truths: &[ImageSlice<T>],
    runtime_s: f64,
    config_hash: String,
) -> Result<EvalReport> {
    if preds.is_empty() || preds.len() != truths.len() {
        return arg_err(format!("{} predictions for {} references", preds.len(), truths.len()));
    }
    let scores: Vec<(f64, f64)> = preds
        .par_iter()
        .zip(truths)
        .map(|(p, t)| {
            let (p, t) = (p.clipped(T::zero(), T::one()), t.clipped(T::zero(), T::one()));
            Ok((psnr(&p, &t, 1.0)?, ssim(&p, &t)?))
        })
        .collect::<Result<_>>()?;
    let ps: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let ss: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let psnr_infinite = ps.iter().any(|p| p.is_infinite());
    let (psnr_mean, psnr_std) = if psnr_infinite { (f64::INFINITY, 0.0) } else { mean_std(&ps) };
    let (ssim_mean, ssim_std) = mean_std(&ss);
    Ok(EvalReport {
        method: method.to_string(),
        interval,
        n_slices: preds.len(),
        psnr_mean,
        psnr_std,
        ssim_mean,
        ssim_std,
        runtime_s,
        config_hash,
        psnr_infinite,
    })
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn fingerprint<T: Scalar, R: Restorer<T>>(h: &mut Sha256, model: &R) {
    for net in model.networks() {
        for p in net.params() {
            for v in p.tensor.data() {
                h.update(v.f64().to_le_bytes());
            }
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        s += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.interval,
            r.n_slices,
            fmt_num(r.psnr_mean),
            fmt_num(r.psnr_std),
            fmt_num(r.ssim_mean),
            fmt_num(r.ssim_std),
            fmt_num(r.runtime_s),
            r.config_hash
        );
    }
    s
}

pub fn write_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    std::fs::write(path, reports_csv(reports))?;
    Ok(())
}

/// Outcome of [`run_benchmark`]: reports in (interval, method) order and one
/// warning per skipped method.
#[derive(Debug, Clone, Default)]
pub struct BenchOutcome {
    pub reports: Vec<EvalReport>,
    pub warnings: Vec<String>,
}

struct Prepared<T: Scalar> {
    acqs: Vec<Vec<Acquisition<T>>>,
    centres: Vec<usize>,
}

impl<T: Scalar> Prepared<T> {
    fn each_centre<F>(&self, f: F) -> Result<Vec<ImageSlice<T>>>
    where
        F: Fn(&Acquisition<T>) -> Result<ImageSlice<T>> + Sync,
    {
        let jobs: Vec<&Acquisition<T>> =
            self.acqs.iter().flat_map(|a| self.centres.iter().map(move |&i| &a[i])).collect();
        jobs.par_iter().map(|a| f(a)).collect()
    }
}

fn radon_volumes<T: Scalar>(lae: &Network<T>, p: &Prepared<T>, geo: &Geometry, batch: usize) -> Result<Vec<Volume<T>>> {
    p.acqs
        .iter()
        .map(|acqs| {
            let interp: Vec<Sinogram<T>> = acqs.iter().map(|a| a.interp.clone()).collect();
            fbp_volume(&restore_sinograms(lae, &interp, geo, batch)?, geo)
        })
        .collect()
}

fn image_stage<T: Scalar>(
    model: &LsAae<T>,
    vols: &[Volume<T>],
    p: &Prepared<T>,
    cfg: &BenchConfig,
) -> Result<Vec<ImageSlice<T>>> {
    let mut out = Vec::new();
    for v in vols {
        out.extend(restore_slices(model, v, &p.centres, cfg.t, cfg.batch)?);
    }
    Ok(out)
}

/// Runs every method at every interval on `volumes`. Learned methods whose
/// models are missing from `models` are skipped with a warning.
pub fn run_benchmark<T: Scalar>(
    methods: &[Method],
    intervals: &[usize],
    volumes: &[Volume<T>],
    models: &BTreeMap<usize, IntervalModels<T>>,
    cfg: &BenchConfig,
) -> Result<BenchOutcome> {
    let mut out = BenchOutcome::default();
    if methods.is_empty() {
        return Ok(out);
    }
    let Some(first) = volumes.first() else {
        return arg_err("benchmark needs at least one test volume");
    };
    let (n, size) = (first.len(), first.slices[0].height());
    if volumes.iter().any(|v| v.len() != n) {
        return arg_err("test volumes must share their slice count");
    }
    if cfg.t == 0 || n < 4 * cfg.t + 1 {
        return arg_err(format!("{n} slices are too few for image interval {}", cfg.t));
    }
    cfg.sart.validate()?;
    let centres: Vec<usize> = (2 * cfg.t..n - 2 * cfg.t).collect();
    let truths: Vec<ImageSlice<T>> =
        volumes.iter().flat_map(|v| centres.iter().map(|&i| v.slices[i].clone())).collect();
    let empty = IntervalModels::default();
    for &interval in intervals {
        let geo = Geometry::new(size, cfg.full_views, interval)?;
        let acqs = volumes.iter().map(|v| acquire_volume(v, &geo)).collect::<Result<Vec<_>>>()?;
        let prep = Prepared { acqs, centres: centres.clone() };
        let m = models.get(&interval).unwrap_or(&empty);
        for &method in methods {
            let mut hasher = Sha256::new();
            hasher.update(format!("method={method} interval={interval} views={} t={} {:?}", cfg.full_views, cfg.t, cfg.sart));
            let missing = |what: &str| format!("{method} at interval {interval} skipped: no {what} checkpoint");
            let started = Instant::now();
            let preds = match method {
                Method::Fbp => prep.each_centre(|a| fbp(&a.sparse, (size, size)))?,
                Method::InterpFbp => prep.each_centre(|a| fbp(&a.interp, (size, size)))?,
                Method::SartTv => {
                    let zero = ImageSlice::zeros(size, size);
                    prep.each_centre(|a| sart_tv(&a.sparse, &cfg.sart, &zero))?
                }
                Method::RadonOnly => {
                    let Some(lae) = &m.lae else {
                        out.warnings.push(missing("sinogram network"));
                        continue;
                    };
                    fingerprint(&mut hasher, lae);
                    let vols = radon_volumes(lae, &prep, &geo, cfg.batch)?;
                    vols.iter().flat_map(|v| centres.iter().map(|&i| v.slices[i].clone())).collect()
                }
                Method::ImageOnly => {
                    let Some(net) = &m.image_only else {
                        out.warnings.push(missing("image-only network"));
                        continue;
                    };
                    fingerprint(&mut hasher, net);
                    let vols = prep
                        .acqs
                        .iter()
                        .map(|a| fbp_volume(&a.iter().map(|q| q.sparse.clone()).collect::<Vec<_>>(), &geo))
                        .collect::<Result<Vec<_>>>()?;
                    image_stage(net, &vols, &prep, cfg)?
                }
                Method::Dual => {
                    let (Some(lae), Some(net)) = (&m.lae, &m.dual) else {
                        out.warnings.push(missing("sinogram or dual image network"));
                        continue;
                    };
                    fingerprint(&mut hasher, lae);
                    fingerprint(&mut hasher, net);
                    let vols = radon_volumes(lae, &prep, &geo, cfg.batch)?;
                    image_stage(net, &vols, &prep, cfg)?
                }
            };
            let runtime = if cfg.timing { started.elapsed().as_secs_f64() } else { 0.0 };
            for v in volumes {
                hasher.update(v.to_tensor().data().iter().flat_map(|x| x.f64().to_le_bytes()).collect::<Vec<u8>>());
            }
            let hash: String = hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect();
            out.reports.push(summarize(method.name(), interval, &preds, &truths, runtime, hash)?);
        }
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("unet".parse::<Method>().is_err());
    }

    #[test]
    fn empty_method_list_gives_header_only_csv() {
        let vols = vec![crate::data::gen_continuous_volume::<f64>(32, 5, 1, 0.1).unwrap()];
        let out = run_benchmark(&[], &[4], &vols, &BTreeMap::new(), &BenchConfig::default()).unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(reports_csv(&out.reports), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn exact_match_is_flagged_infinite() {
        let a = crate::data::shepp_logan::<f64>(32).unwrap();
        let r = summarize("x", 4, &[a.clone()], &[a], 0.0, config_hash("")).unwrap();
        assert!(r.psnr_infinite && r.psnr_mean.is_infinite());
        assert!((r.ssim_mean - 1.0).abs() < 1e-12);
        assert!(reports_csv(&[r]).contains(",inf,"));
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = config_hash("abc");
        assert_eq!(h, "ba7816bf8f01cfea");
    }
}

//! Synthetic multi-domain real/fake benchmark.
//!
//! Each domain owns a semantic center and a block of artifact directions.
//! Blocks of different domains are orthogonal, so an artifact learned in
//! one domain carries no signal in another. Inside a block the variant
//! directions share a common axis (weighted by `shared_fraction`), which is
//! what lets a detector trained on some variants of a domain recognise the
//! held-out variants of the same domain. Everything is finally rotated by a
//! shared random orthogonal matrix so no artifact is axis-aligned.
//!
//! Real: `x = c_k + spread·g`. Fake of variant v:
//! `x = c_k + spread·g + strength·a_{k,v}·(1 + 0.2·u)` with g ~ N(0, I) and
//! u ~ U(−1, 1).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seeds;

pub const DEFAULT_DOMAIN_NAMES: [&str; 4] = ["Deepfake", "AIGC", "IMDL", "Doc"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub semantic_spread: f64,
    pub artifact_strength: f64,
    /// Pairwise center distance in units of `semantic_spread`.
    pub center_separation: f64,
    /// Weight of the domain-shared axis in every variant direction; 0 makes
    /// all variant directions mutually orthogonal.
    pub shared_fraction: f64,
}

impl Default for DomainParams {
    fn default() -> Self {
        Self {
            semantic_spread: 1.0,
            artifact_strength: 3.5,
            center_separation: 8.0,
            shared_fraction: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: usize,
    pub name: String,
    pub semantic_center: Vec<f64>,
    pub semantic_spread: f64,
    /// One unit vector per variant.
    pub artifact_directions: Vec<Vec<f64>>,
    pub artifact_strength: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f64>,
    /// 0 real, 1 fake.
    pub label: u8,
    pub domain: usize,
    /// Present exactly for fakes.
    pub variant: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SampleSet {
    pub d_feature: usize,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(d_feature: usize, samples: Vec<Sample>) -> Self {
        Self { d_feature, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn domains(&self) -> BTreeSet<usize> {
        self.samples.iter().map(|s| s.domain).collect()
    }

    pub fn filter(&self, keep: impl Fn(&Sample) -> bool) -> SampleSet {
        SampleSet {
            d_feature: self.d_feature,
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    pub fn of_domain(&self, domain: usize) -> SampleSet {
        self.filter(|s| s.domain == domain)
    }

    pub fn reals(&self) -> SampleSet {
        self.filter(|s| s.label == 0)
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.label == 1).count() as f64 / self.samples.len() as f64
    }
}

/// Random orthogonal matrix (row-major d×d) by twice-applied Gram–Schmidt on
/// Gaussian columns.
fn random_rotation(d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeds::rng(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for q in &cols {
                let p: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= p * y;
                }
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        cols.push(v);
    }
    cols
}

fn rotate(cols: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut out = vec![0.0; d];
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (o, &q) in out.iter_mut().zip(&cols[j]) {
                *o += xj * q;
            }
        }
    }
    out
}

fn domain_name(k: usize, n: usize) -> String {
    if n <= DEFAULT_DOMAIN_NAMES.len() {
        DEFAULT_DOMAIN_NAMES[k].to_string()
    } else {
        format!("domain{k}")
    }
}

pub fn make_domains(
    k: usize,
    variants_per_domain: usize,
    d_feature: usize,
    seed: u64,
) -> Result<Vec<DomainSpec>> {
    make_domains_with(
        k,
        variants_per_domain,
        d_feature,
        seed,
        &DomainParams::default(),
    )
}

pub fn make_domains_with(
    k: usize,
    variants_per_domain: usize,
    d_feature: usize,
    seed: u64,
    params: &DomainParams,
) -> Result<Vec<DomainSpec>> {
    if k == 0 || variants_per_domain == 0 {
        return invalid("need at least one domain and one variant");
    }
    if k * variants_per_domain + k > d_feature {
        return invalid(format!(
            "{k} domains x {variants_per_domain} variants need {} dimensions, have {d_feature}",
            k * variants_per_domain + k
        ));
    }
    if !(params.semantic_spread > 0.0) || !(params.artifact_strength >= 0.0) {
        return invalid("spread must be positive and strength non-negative");
    }
    if !(0.0..=1.0).contains(&params.shared_fraction) {
        return invalid("shared_fraction must lie in [0, 1]");
    }
    let rot = random_rotation(d_feature, seeds::derive(seed, "domgen/rotation"));
    let center_norm = params.center_separation * params.semantic_spread / 2f64.sqrt();

    (0..k)
        .map(|dom| {
            let mut center = vec![0.0; d_feature];
            if k > 1 {
                center[dom] = center_norm;
            }
            let block = k + dom * variants_per_domain;
            let mut rng = seeds::rng(seeds::derive_ints(
                seeds::derive(seed, "domgen/variants"),
                &[dom as u64],
            ));
            let directions = (0..variants_per_domain)
                .map(|v| {
                    let mut a = vec![0.0; d_feature];
                    if params.shared_fraction == 0.0 || variants_per_domain == 1 {
                        a[block + if params.shared_fraction == 0.0 { v } else { 0 }] = 1.0;
                    } else {
                        let g: Vec<f64> = (1..variants_per_domain)
                            .map(|_| rng.sample(StandardNormal))
                            .collect();
                        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                        a[block] = params.shared_fraction.sqrt();
                        let w = (1.0 - params.shared_fraction).sqrt() / gn;
                        for (i, gi) in g.iter().enumerate() {
                            a[block + 1 + i] = w * gi;
                        }
                    }
                    let mut r = rotate(&rot, &a);
                    let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                    r.iter_mut().for_each(|x| *x /= n);
                    r
                })
                .collect();
            Ok(DomainSpec {
                domain_id: dom,
                name: domain_name(dom, k),
                semantic_center: rotate(&rot, &center),
                semantic_spread: params.semantic_spread,
                artifact_directions: directions,
                artifact_strength: params.artifact_strength,
            })
        })
        .collect()
}

const REAL_STREAM: u64 = u64::MAX;

fn draw(spec: &DomainSpec, variant: Option<usize>, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed);
    let mut x: Vec<f64> = spec
        .semantic_center
        .iter()
        .map(|&c| c + spec.semantic_spread * rng.sample::<f64, _>(StandardNormal))
        .collect();
    if let Some(v) = variant {
        let u: f64 = rng.random_range(-1.0..1.0);
        let amp = spec.artifact_strength * (1.0 + 0.2 * u);
        for (xi, &ai) in x.iter_mut().zip(&spec.artifact_directions[v]) {
            *xi += amp * ai;
        }
    }
    x
}

/// Samples reals and fakes for every domain. Each sample has its own stream
/// keyed by (seed, domain, variant, index), so output is order-independent.
pub fn sample_dataset(
    specs: &[DomainSpec],
    n_real_per_domain: usize,
    n_fake_per_variant: usize,
    seed: u64,
) -> Result<SampleSet> {
    if specs.is_empty() {
        return invalid("no domain specs");
    }
    if n_real_per_domain == 0 || n_fake_per_variant == 0 {
        return invalid("sample counts must be positive");
    }
    let d = specs[0].semantic_center.len();
    let mut samples = Vec::new();
    for spec in specs {
        if spec.semantic_center.len() != d || spec.artifact_directions.iter().any(|a| a.len() != d)
        {
            return invalid("inconsistent feature dimensions across specs");
        }
        let dom = spec.domain_id as u64;
        for i in 0..n_real_per_domain {
            let s = seeds::derive_ints(seed, &[dom, REAL_STREAM, i as u64]);
            samples.push(Sample {
                id: samples.len(),
                features: draw(spec, None, s),
                label: 0,
                domain: spec.domain_id,
                variant: None,
            });
        }
        for v in 0..spec.artifact_directions.len() {
            for i in 0..n_fake_per_variant {
                let s = seeds::derive_ints(seed, &[dom, v as u64, i as u64]);
                samples.push(Sample {
                    id: samples.len(),
                    features: draw(spec, Some(v), s),
                    label: 1,
                    domain: spec.domain_id,
                    variant: Some(v),
                });
            }
        }
    }
    Ok(SampleSet::new(d, samples))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train_fraction_of_variants: f64,
    pub seed: u64,
    /// Indexed by domain id.
    pub train_variants: BTreeMap<usize, Vec<usize>>,
    pub test_variants: BTreeMap<usize, Vec<usize>>,
    pub counts: PartitionCounts,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
    pub manifest: SplitManifest,
}

fn round_count(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Partitions fakes by variant (train variants → train/val at 9:1, the rest
/// → test) and reals proportionally to the share of train variants.
pub fn split_by_variant(
    set: &SampleSet,
    train_fraction_of_variants: f64,
    seed: u64,
) -> Result<Split> {
    if !(train_fraction_of_variants > 0.0 && train_fraction_of_variants < 1.0) {
        return invalid("variant fraction must lie strictly between 0 and 1");
    }
    let mut train_variants = BTreeMap::new();
    let mut test_variants = BTreeMap::new();
    let mut train_ids = Vec::new();
    let mut val_ids = Vec::new();
    let mut test_ids = Vec::new();

    for dom in set.domains() {
        let variants: BTreeSet<usize> = set
            .samples
            .iter()
            .filter(|s| s.domain == dom)
            .filter_map(|s| s.variant)
            .collect();
        if variants.len() < 2 {
            return invalid(format!(
                "domain {dom} has {} variants, need at least 2",
                variants.len()
            ));
        }
        let mut order: Vec<usize> = variants.into_iter().collect();
        let n_var = order.len();
        let n_train = round_count(train_fraction_of_variants * n_var as f64);
        if n_train == 0 || n_train == n_var {
            return invalid(format!(
                "fraction {train_fraction_of_variants} leaves an empty side for domain {dom}"
            ));
        }
        order.shuffle(&mut seeds::rng(seeds::derive_ints(
            seeds::derive(seed, "split/variants"),
            &[dom as u64],
        )));
        let mut tr: Vec<usize> = order[..n_train].to_vec();
        let mut te: Vec<usize> = order[n_train..].to_vec();
        tr.sort_unstable();
        te.sort_unstable();

        let mut fakes_train: Vec<usize> = Vec::new();
        let mut reals: Vec<usize> = Vec::new();
        for s in set.samples.iter().filter(|s| s.domain == dom) {
            match s.variant {
                Some(v) if tr.binary_search(&v).is_ok() => fakes_train.push(s.id),
                Some(_) => test_ids.push(s.id),
                None => reals.push(s.id),
            }
        }
        let mut rng = seeds::rng(seeds::derive_ints(
            seeds::derive(seed, "split/samples"),
            &[dom as u64],
        ));
        fakes_train.shuffle(&mut rng);
        let n_fake_train = round_count(0.9 * fakes_train.len() as f64);
        train_ids.extend_from_slice(&fakes_train[..n_fake_train]);
        val_ids.extend_from_slice(&fakes_train[n_fake_train..]);

        reals.shuffle(&mut rng);
        let n_trval = round_count(reals.len() as f64 * n_train as f64 / n_var as f64);
        let n_real_train = round_count(0.9 * n_trval as f64);
        train_ids.extend_from_slice(&reals[..n_real_train]);
        val_ids.extend_from_slice(&reals[n_real_train..n_trval]);
        test_ids.extend_from_slice(&reals[n_trval..]);

        train_variants.insert(dom, tr);
        test_variants.insert(dom, te);
    }
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    test_ids.sort_unstable();
    if train_ids.is_empty() || test_ids.is_empty() {
        return invalid("split produced an empty partition");
    }

    let manifest = SplitManifest {
        train_fraction_of_variants,
        seed,
        train_variants,
        test_variants,
        counts: PartitionCounts {
            train: train_ids.len(),
            val: val_ids.len(),
            test: test_ids.len(),
        },
        train_ids,
        val_ids,
        test_ids,
    };
    let (train, val, test) = apply_split(set, &manifest)?;
    Ok(Split {
        train,
        val,
        test,
        manifest,
    })
}

/// Rebuilds the three partitions from the id lists of a manifest.
pub fn apply_split(
    set: &SampleSet,
    manifest: &SplitManifest,
) -> Result<(SampleSet, SampleSet, SampleSet)> {
    let by_id: BTreeMap<usize, &Sample> = set.samples.iter().map(|s| (s.id, s)).collect();
    let pick = |ids: &[usize]| -> Result<SampleSet> {
        let samples = ids
            .iter()
            .map(|id| {
                by_id.get(id).map(|s| (*s).clone()).ok_or_else(|| {
                    Error::InvalidInput(format!("split references unknown sample {id}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet::new(set.d_feature, samples))
    };
    Ok((
        pick(&manifest.train_ids)?,
        pick(&manifest.val_ids)?,
        pick(&manifest.test_ids)?,
    ))
}

/// Everything `gen-data` writes next to `data.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub domains: usize,
    pub variants_per_domain: usize,
    pub d_feature: usize,
    pub n_real_per_domain: usize,
    pub n_fake_per_variant: usize,
    pub params: DomainParams,
    pub specs: Vec<DomainSpec>,
    pub split: SplitManifest,
}

impl DatasetManifest {
    pub fn domain_names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }
}

pub fn data_csv(set: &SampleSet) -> String {
    let mut out = String::from("sample_id,domain,variant,label");
    for i in 0..set.d_feature {
        let _ = write!(out, ",f{i}");
    }
    out.push('\n');
    for s in &set.samples {
        let _ = write!(out, "{},{},", s.id, s.domain);
        if let Some(v) = s.variant {
            let _ = write!(out, "{v}");
        }
        let _ = write!(out, ",{}", s.label);
        for x in &s.features {
            let _ = write!(out, ",{x:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_data_csv(text: &str) -> Result<SampleSet> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let fixed = ["sample_id", "domain", "variant", "label"];
    if headers.len() < 5 || headers.iter().take(4).ne(fixed.iter().copied()) {
        return Err(Error::Format(
            "data.csv header must start with sample_id,domain,variant,label".into(),
        ));
    }
    let d = headers.len() - 4;
    for (i, h) in headers.iter().skip(4).enumerate() {
        if h != format!("f{i}") {
            return Err(Error::Format(format!("unexpected feature column {h:?}")));
        }
    }
    let fmt = |what: &str, v: &str| Error::Format(format!("bad {what} {v:?}"));
    let mut samples = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let id = rec[0].parse().map_err(|_| fmt("sample_id", &rec[0]))?;
        let domain = rec[1].parse().map_err(|_| fmt("domain", &rec[1]))?;
        let variant = if rec[2].is_empty() {
            None
        } else {
            Some(rec[2].parse().map_err(|_| fmt("variant", &rec[2]))?)
        };
        let label: u8 = rec[3].parse().map_err(|_| fmt("label", &rec[3]))?;
        if label > 1 || (label == 1) != variant.is_some() {
            return Err(fmt("label/variant pair", &rec[3]));
        }
        let features = (4..4 + d)
            .map(|i| {
                let v: f64 = rec[i].parse().map_err(|_| fmt("feature", &rec[i]))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(fmt("feature", &rec[i]))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample {
            id,
            features,
            label,
            domain,
            variant,
        });
    }
    Ok(SampleSet::new(d, samples))
}

pub fn write_dataset(dir: &Path, set: &SampleSet, manifest: &DatasetManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("data.csv"), data_csv(set))?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<(SampleSet, DatasetManifest)> {
    let set = parse_data_csv(&fs::read_to_string(dir.join("data.csv"))?)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    Ok((set, manifest))
}

/// Generation settings shared by the CLI and the protocol fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub domains: usize,
    pub variants: usize,
    pub dim: usize,
    pub n_real_per_domain: usize,
    pub n_fake_per_variant: usize,
    pub train_fraction_of_variants: f64,
    pub params: DomainParams,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            domains: 4,
            variants: 8,
            dim: 128,
            n_real_per_domain: 1000,
            n_fake_per_variant: 125,
            train_fraction_of_variants: 0.5,
            params: DomainParams::default(),
            seed: 7,
        }
    }
}

/// Generates, samples and splits a benchmark in one go.
pub fn build_benchmark(cfg: &BenchmarkConfig) -> Result<(SampleSet, DatasetManifest)> {
    let specs = make_domains_with(
        cfg.domains,
        cfg.variants,
        cfg.dim,
        seeds::derive(cfg.seed, "domains"),
        &cfg.params,
    )?;
    let set = sample_dataset(
        &specs,
        cfg.n_real_per_domain,
        cfg.n_fake_per_variant,
        seeds::derive(cfg.seed, "samples"),
    )?;
    let split = split_by_variant(
        &set,
        cfg.train_fraction_of_variants,
        seeds::derive(cfg.seed, "split"),
    )?;
    let manifest = DatasetManifest {
        seed: cfg.seed,
        domains: cfg.domains,
        variants_per_domain: cfg.variants,
        d_feature: cfg.dim,
        n_real_per_domain: cfg.n_real_per_domain,
        n_fake_per_variant: cfg.n_fake_per_variant,
        params: cfg.params.clone(),
        specs,
        split: split.manifest,
    };
    Ok((set, manifest))
}

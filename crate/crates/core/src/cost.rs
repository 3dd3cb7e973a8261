//! Read-cost accounting.
//!
//! `nucs(i, k) = coverage(i, k) · oligos(i, k)` is the number of nucleotides
//! sequenced to recover layer `k` of image `i`, with coverage expressed in
//! nucleotides per molecule. The full read cost is the sum over every image
//! and layer `0..N_levels`, divided by the total pixel count; the
//! progressive cost up to layer `K` sums layers `0..=K` only, and the gain
//! is their ratio.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{ReadOutcome, TargetRef, TelemetryRecord};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("no images in cost inputs")]
    Empty,
    #[error("image {0} has no layers")]
    NoLayers(String),
    #[error("images disagree on the number of layers")]
    LevelMismatch,
    #[error("{what} must be positive for image {image} layer {layer}")]
    NonPositive {
        what: &'static str,
        image: String,
        layer: usize,
    },
    #[error("image {image} has no positive pixel count")]
    NoPixels { image: String },
    #[error("index out of range: image {image}, layer {layer}")]
    OutOfRange { image: usize, layer: usize },
    #[error("no telemetry for {0}")]
    MissingTelemetry(String),
    #[error("telemetry is empty")]
    EmptyTelemetry,
    #[error("cost inputs: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerInput {
    /// Molecules holding this layer.
    pub oligos: u64,
    /// Expected sequenced nucleotides per molecule.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInput {
    pub id: String,
    pub pixels: u64,
    pub layers: Vec<LayerInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub images: Vec<ImageInput>,
}

impl CostInputs {
    pub fn new(images: Vec<ImageInput>) -> Result<Self, CostError> {
        let inputs = Self { images };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let inputs: Self =
            serde_json::from_str(text).map_err(|e| CostError::Parse(e.to_string()))?;
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let first = self.images.first().ok_or(CostError::Empty)?;
        for img in &self.images {
            if img.layers.is_empty() {
                return Err(CostError::NoLayers(img.id.clone()));
            }
            if img.layers.len() != first.layers.len() {
                return Err(CostError::LevelMismatch);
            }
            if img.pixels == 0 {
                return Err(CostError::NoPixels {
                    image: img.id.clone(),
                });
            }
            for (k, l) in img.layers.iter().enumerate() {
                let bad = |what| CostError::NonPositive {
                    what,
                    image: img.id.clone(),
                    layer: k,
                };
                if l.oligos == 0 {
                    return Err(bad("oligo count"));
                }
                if !(l.coverage > 0.0 && l.coverage.is_finite()) {
                    return Err(bad("coverage"));
                }
            }
        }
        Ok(())
    }

    pub fn n_images(&self) -> usize {
        self.images.len()
    }

    pub fn n_levels(&self) -> usize {
        self.images.first().map_or(0, |i| i.layers.len())
    }

    pub fn total_pixels(&self) -> u64 {
        self.images.iter().map(|i| i.pixels).sum()
    }

    fn layer(&self, i: usize, k: usize) -> Result<&LayerInput, CostError> {
        self.images
            .get(i)
            .and_then(|img| img.layers.get(k))
            .ok_or(CostError::OutOfRange { image: i, layer: k })
    }

    pub fn nucs(&self, i: usize, k: usize) -> Result<f64, CostError> {
        let l = self.layer(i, k)?;
        Ok(l.coverage * l.oligos as f64)
    }

    /// Coverage as reads per molecule, for molecules of `molecule_nt`.
    pub fn reads_per_oligo(
        &self,
        i: usize,
        k: usize,
        molecule_nt: usize,
    ) -> Result<f64, CostError> {
        Ok(self.layer(i, k)?.coverage / molecule_nt as f64)
    }

    fn check_k(&self, k: usize) -> Result<(), CostError> {
        if k >= self.n_levels() {
            return Err(CostError::OutOfRange { image: 0, layer: k });
        }
        Ok(())
    }

    fn nucs_upto(&self, images: std::ops::Range<usize>, k: usize) -> f64 {
        images
            .flat_map(|i| (0..=k).map(move |kk| (i, kk)))
            .map(|(i, kk)| self.nucs(i, kk).expect("validated indices"))
            .sum()
    }

    pub fn read_cost_full(&self) -> f64 {
        self.nucs_upto(0..self.n_images(), self.n_levels() - 1) / self.total_pixels() as f64
    }

    pub fn read_cost_pd(&self, k: usize) -> Result<f64, CostError> {
        self.check_k(k)?;
        Ok(self.nucs_upto(0..self.n_images(), k) / self.total_pixels() as f64)
    }

    /// Dataset-wide gain `R_c / R_c_pd(K)`.
    pub fn gain(&self, k: usize) -> Result<f64, CostError> {
        Ok(self.read_cost_full() / self.read_cost_pd(k)?)
    }

    /// Gain for a single image.
    pub fn image_gain(&self, i: usize, k: usize) -> Result<f64, CostError> {
        self.check_k(k)?;
        self.layer(i, k)?;
        Ok(self.nucs_upto(i..i + 1, self.n_levels() - 1) / self.nucs_upto(i..i + 1, k))
    }

    /// Per-image gains averaged over images.
    pub fn average_gain(&self, k: usize) -> Result<f64, CostError> {
        let sum = (0..self.n_images())
            .map(|i| self.image_gain(i, k))
            .sum::<Result<f64, _>>()?;
        Ok(sum / self.n_images() as f64)
    }

    pub fn report(&self) -> CostReport {
        let totals: Vec<f64> = (0..self.n_levels())
            .map(|k| (0..self.n_images()).map(|i| self.nucs(i, k).unwrap()).sum())
            .collect();
        let oligos: Vec<u64> = (0..self.n_levels())
            .map(|k| self.images.iter().map(|img| img.layers[k].oligos).sum())
            .collect();
        let average: Vec<f64> = (0..self.n_levels())
            .map(|k| self.average_gain(k).unwrap())
            .collect();
        CostReport::from_layer_totals(
            Variant::Theoretical,
            &oligos,
            &totals,
            self.total_pixels(),
            Some(average),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Theoretical,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub k: usize,
    pub oligos: u64,
    pub nucs: f64,
    pub rc_pd: f64,
    pub gpd: f64,
    /// Per-image gains averaged over images, when known.
    pub gpd_avg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub variant: Variant,
    pub rc: f64,
    pub rows: Vec<LayerRow>,
}

impl CostReport {
    fn from_layer_totals(
        variant: Variant,
        oligos: &[u64],
        totals: &[f64],
        pixels: u64,
        average: Option<Vec<f64>>,
    ) -> Self {
        let px = pixels as f64;
        let rc = totals.iter().sum::<f64>() / px;
        let mut acc = 0.0;
        let rows = totals
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                acc += n;
                let rc_pd = acc / px;
                LayerRow {
                    k,
                    oligos: oligos[k],
                    nucs: n,
                    rc_pd,
                    gpd: rc / rc_pd,
                    gpd_avg: average.as_ref().map(|a| a[k]),
                }
            })
            .collect();
        Self { variant, rc, rows }
    }

    pub fn gain(&self, k: usize) -> Option<f64> {
        self.rows.get(k).map(|r| r.gpd)
    }

    /// `layer,K,oligos,nucs,Rc_pd,Gpd`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,K,oligos,nucs,Rc_pd,Gpd\n");
        for r in &self.rows {
            writeln!(
                out,
                "L{},{},{},{},{:.6},{:.6}",
                r.k, r.k, r.oligos, r.nucs, r.rc_pd, r.gpd
            )
            .unwrap();
        }
        out
    }
}

/// Fixed-width text table of a report.
pub fn render_table(report: &CostReport) -> String {
    let variant = match report.variant {
        Variant::Theoretical => "theoretical",
        Variant::Simulated => "simulated",
    };
    let mut out = String::new();
    writeln!(out, "read cost ({variant}): Rc = {:.4} nt/pixel", report.rc).unwrap();
    writeln!(
        out,
        "{:<6}{:>3}{:>12}{:>18}{:>12}{:>9}{:>9}",
        "layer", "K", "oligos", "nucs", "Rc_pd", "Gpd", "Gpd_avg"
    )
    .unwrap();
    for r in &report.rows {
        let avg = r.gpd_avg.map_or("-".to_string(), |g| format!("{g:.2}"));
        writeln!(
            out,
            "{:<6}{:>3}{:>12}{:>18.0}{:>12.4}{:>9.2}{:>9}",
            format!("L{}", r.k),
            r.k,
            r.oligos,
            r.nucs,
            r.rc_pd,
            r.gpd,
            avg
        )
        .unwrap();
    }
    out
}

/// Nucleotides sequenced per `(image, layer)` in an event log, ejections
/// included, split into `(accepted, ejected)`.
pub fn telemetry_nucs(records: &[TelemetryRecord]) -> BTreeMap<TargetRef, (u64, u64)> {
    let mut out: BTreeMap<TargetRef, (u64, u64)> = BTreeMap::new();
    for r in records {
        if let Some(t) = &r.target {
            let e = out.entry(t.clone()).or_insert((0, 0));
            match r.decision {
                ReadOutcome::Accepted => e.0 += r.sequenced_nt,
                ReadOutcome::Ejected => e.1 += r.sequenced_nt,
            }
        }
    }
    out
}

/// Inputs whose coverage is what the log's accepted reads actually
/// sequenced per molecule.
pub fn inputs_from_telemetry(
    records: &[TelemetryRecord],
    oligos: &CostInputs,
) -> Result<CostInputs, CostError> {
    let per = telemetry_nucs(records);
    let mut images = oligos.images.clone();
    for img in &mut images {
        for (k, l) in img.layers.iter_mut().enumerate() {
            let t = TargetRef::new(img.id.clone(), k);
            let accepted = per.get(&t).map_or(0, |e| e.0);
            if accepted == 0 {
                return Err(CostError::MissingTelemetry(t.to_string()));
            }
            l.coverage = accepted as f64 / l.oligos as f64;
        }
    }
    CostInputs::new(images)
}

/// Cost report from event logs: every nucleotide sequenced under a layer's
/// target, ejections included, over the pixel count of `inputs`.
pub fn simulated_cost(
    records: &[TelemetryRecord],
    inputs: &CostInputs,
) -> Result<CostReport, CostError> {
    if records.is_empty() {
        return Err(CostError::EmptyTelemetry);
    }
    let per = telemetry_nucs(records);
    let n = inputs.n_levels();
    let mut totals = vec![0.0; n];
    let mut oligos = vec![0u64; n];
    for img in &inputs.images {
        for (k, l) in img.layers.iter().enumerate() {
            let t = TargetRef::new(img.id.clone(), k);
            let (a, e) = per
                .get(&t)
                .copied()
                .ok_or_else(|| CostError::MissingTelemetry(t.to_string()))?;
            totals[k] += (a + e) as f64;
            oligos[k] += l.oligos;
        }
    }
    Ok(CostReport::from_layer_totals(
        Variant::Simulated,
        &oligos,
        &totals,
        inputs.total_pixels(),
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use uuid::Uuid;

    fn single(nucs: &[u64], pixels: u64) -> CostInputs {
        CostInputs::new(vec![ImageInput {
            id: "a".into(),
            pixels,
            layers: nucs
                .iter()
                .map(|&n| LayerInput {
                    oligos: n,
                    coverage: 1.0,
                })
                .collect(),
        }])
        .unwrap()
    }

    #[test]
    fn nucs_arithmetic() {
        let inputs = CostInputs::new(vec![ImageInput {
            id: "k".into(),
            pixels: 1,
            layers: vec![
                LayerInput {
                    oligos: 802,
                    coverage: 1216.0,
                },
                LayerInput {
                    oligos: 10,
                    coverage: 100.0,
                },
            ],
        }])
        .unwrap();
        assert_eq!(inputs.nucs(0, 0).unwrap(), 975_232.0);
        assert_eq!(inputs.nucs(0, 1).unwrap(), 1000.0);
        assert_eq!(inputs.reads_per_oligo(0, 0, 1216).unwrap(), 1.0);
        assert!(inputs.nucs(1, 0).is_err());
        let mut bad = inputs.clone();
        bad.images[0].layers[0].coverage = 0.0;
        assert!(matches!(bad.validate(), Err(CostError::NonPositive { .. })));
    }

    #[test]
    fn hand_summed_costs_and_gains() {
        let inputs = single(&[100, 300, 600], 1000);
        assert_eq!(inputs.read_cost_full(), 1.0);
        assert_eq!(inputs.read_cost_pd(0).unwrap(), 0.1);
        assert_eq!(inputs.gain(0).unwrap(), 10.0);
        assert_eq!(inputs.read_cost_pd(2).unwrap(), inputs.read_cost_full());
        assert_eq!(inputs.gain(2).unwrap(), 1.0);
        assert!(inputs.gain(3).is_err());
    }

    #[test]
    fn duplicated_image_keeps_ratios() {
        let one = single(&[100, 300, 600], 1000);
        let mut two = one.clone();
        two.images.push(one.images[0].clone());
        assert_eq!(two.read_cost_full(), one.read_cost_full());
        assert_eq!(two.gain(0).unwrap(), one.gain(0).unwrap());
    }

    #[test]
    fn coverage_scaling_leaves_gains() {
        let one = single(&[7, 30, 200, 900], 5000);
        let mut scaled = one.clone();
        for l in &mut scaled.images[0].layers {
            l.coverage *= 37.5;
        }
        for k in 0..4 {
            assert!((one.gain(k).unwrap() - scaled.gain(k).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_layer_table() {
        let r = single(&[42], 10).report();
        assert!(r.rows.iter().all(|row| row.gpd == 1.0));
    }

    #[test]
    fn golden_table() {
        let table = render_table(&single(&[100, 300, 600], 1000).report());
        let golden = "\
read cost (theoretical): Rc = 1.0000 nt/pixel
layer   K      oligos              nucs       Rc_pd      Gpd  Gpd_avg
L0      0         100               100      0.1000    10.00    10.00
L1      1         300               300      0.4000     2.50     2.50
L2      2         600               600      1.0000     1.00     1.00
";
        assert_eq!(table, golden);
    }

    fn rec(idx: u64, decision: ReadOutcome, nt: u64, layer: usize) -> TelemetryRecord {
        TelemetryRecord {
            idx,
            molecule_id: Uuid::nil(),
            decision,
            sequenced_nt: nt,
            target: Some(TargetRef::new("a", layer)),
        }
    }

    #[test]
    fn simulated_adds_ejections() {
        let oligos = single(&[2, 4], 100);
        let mut log = vec![
            rec(0, ReadOutcome::Accepted, 1216, 0),
            rec(1, ReadOutcome::Accepted, 1210, 0),
            rec(2, ReadOutcome::Accepted, 1216, 1),
        ];
        let theo = inputs_from_telemetry(&log, &oligos).unwrap();
        let sim = simulated_cost(&log, &oligos).unwrap();
        assert!((sim.rc - theo.read_cost_full()).abs() < 1e-12);
        log.push(rec(3, ReadOutcome::Ejected, 800, 1));
        log.push(rec(4, ReadOutcome::Ejected, 800, 0));
        let sim = simulated_cost(&log, &oligos).unwrap();
        assert!((sim.rc - theo.read_cost_full() - 2.0 * 800.0 / 100.0).abs() < 1e-9);
        assert_eq!(simulated_cost(&[], &oligos), Err(CostError::EmptyTelemetry));
        let missing = vec![rec(0, ReadOutcome::Accepted, 1216, 0)];
        assert!(matches!(
            simulated_cost(&missing, &oligos),
            Err(CostError::MissingTelemetry(_))
        ));
    }

    #[test]
    fn json_inputs() {
        let text = r#"{"images":[{"id":"x","pixels":393216,"layers":[{"oligos":802,"coverage":1216},{"oligos":2229,"coverage":1216}]}]}"#;
        let inputs = CostInputs::from_json(text).unwrap();
        assert_eq!(inputs.n_levels(), 2);
        assert_eq!(CostInputs::from_json(&inputs.to_json()).unwrap(), inputs);
        assert!(CostInputs::from_json(r#"{"images":[]}"#).is_err());
    }
}

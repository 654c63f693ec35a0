//! Versioned JSON documents for trained models and fitted copulas.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! loaded model predicts bit-identically to the one that was saved.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{ElmModel, MlpModel};
use crate::copula::{CopulaPair, GumbelModel};
use crate::dbn::network::{Dense, Network, OutputUnit, Scaling};
use crate::dbn::{DbnModel, RbmParams, TrainConfig};
use crate::error::{Error, Result};
use crate::ingest::WIDTH_WITH_INDICATORS;
use crate::transform::ScaleParams;

pub const MODEL_FORMAT: &str = "copula-dbn/model";
pub const COPULA_FORMAT: &str = "copula-dbn/copula";
pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dbn,
    Mlp,
    Elm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dbn => "dbn",
            ModelKind::Mlp => "mlp",
            ModelKind::Elm => "elm",
        }
    }
}

/// Any trained forecaster.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Dbn(DbnModel),
    Mlp(MlpModel),
    Elm(ElmModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Dbn(_) => ModelKind::Dbn,
            TrainedModel::Mlp(_) => ModelKind::Mlp,
            TrainedModel::Elm(_) => ModelKind::Elm,
        }
    }

    pub fn predict(&self, raw: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Dbn(m) => m.predict(raw),
            TrainedModel::Mlp(m) => m.predict(raw),
            TrainedModel::Elm(m) => m.predict(raw),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            TrainedModel::Dbn(m) => m.architecture[0],
            TrainedModel::Mlp(m) => m.network.input_width(),
            TrainedModel::Elm(m) => m.input_width(),
        }
    }

    pub fn with_indicators(&self) -> bool {
        self.input_width() == WIDTH_WITH_INDICATORS
    }

    pub fn architecture(&self) -> Vec<usize> {
        match self {
            TrainedModel::Dbn(m) => m.architecture.clone(),
            TrainedModel::Mlp(m) => m.architecture(),
            TrainedModel::Elm(m) => vec![m.input_width(), m.n_hidden(), 1],
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        let (layers, head, scaling, train, seed) = match self {
            TrainedModel::Dbn(m) => (
                m.rbms
                    .iter()
                    .map(|r| LayerDoc {
                        weights: rows_of(&r.weights),
                        bias: r.hidden_bias.iter().copied().collect(),
                        visible_bias: Some(r.visible_bias.iter().copied().collect()),
                    })
                    .collect(),
                HeadDoc::from(&m.head),
                &m.scaling,
                Some(m.config.clone()),
                m.config.seed,
            ),
            TrainedModel::Mlp(m) => (
                m.network.hidden.iter().map(LayerDoc::from).collect(),
                HeadDoc::from(&m.network.head),
                &m.scaling,
                Some(m.config.clone()),
                m.config.seed,
            ),
            TrainedModel::Elm(m) => {
                let n = m.n_hidden();
                (
                    vec![LayerDoc::from(&m.hidden)],
                    HeadDoc {
                        weights: m.output.rows(0, n).iter().copied().collect(),
                        bias: m.output[n],
                    },
                    &m.scaling,
                    None,
                    m.seed,
                )
            }
        };
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: DOCUMENT_VERSION,
            kind: self.kind(),
            architecture: self.architecture(),
            with_indicators: self.with_indicators(),
            layers,
            head,
            input_scale: scaling.inputs.clone(),
            target_scale: scaling.target,
            train,
            seed,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        doc.validate()?;
        let scaling = Scaling {
            inputs: doc.input_scale.clone(),
            target: doc.target_scale,
        };
        let head = OutputUnit {
            weights: DVector::from_column_slice(&doc.head.weights),
            bias: doc.head.bias,
        };
        let train = || {
            doc.train
                .clone()
                .ok_or_else(|| Error::document("train", "required for this model kind"))
        };
        let model = match doc.kind {
            ModelKind::Dbn => {
                let mut rbms = Vec::with_capacity(doc.layers.len());
                for (k, l) in doc.layers.iter().enumerate() {
                    let visible = l
                        .visible_bias
                        .as_ref()
                        .ok_or_else(|| Error::document(format!("layers[{k}].visible_bias"), "missing"))?;
                    rbms.push(RbmParams {
                        weights: l.matrix(),
                        visible_bias: DVector::from_column_slice(visible),
                        hidden_bias: DVector::from_column_slice(&l.bias),
                    });
                }
                TrainedModel::Dbn(DbnModel {
                    architecture: doc.architecture.clone(),
                    rbms,
                    head,
                    scaling,
                    config: train()?,
                })
            }
            ModelKind::Mlp => TrainedModel::Mlp(MlpModel {
                network: Network {
                    hidden: doc.layers.iter().map(LayerDoc::dense).collect(),
                    head,
                },
                scaling,
                config: train()?,
            }),
            ModelKind::Elm => {
                if doc.layers.len() != 1 {
                    return Err(Error::document(
                        "layers",
                        format!("ELM has one hidden layer, found {}", doc.layers.len()),
                    ));
                }
                let mut output: Vec<f64> = doc.head.weights.clone();
                output.push(doc.head.bias);
                TrainedModel::Elm(ElmModel {
                    hidden: doc.layers[0].dense(),
                    output: DVector::from_vec(output),
                    scaling,
                    seed: doc.seed,
                })
            }
        };
        let checked = match &model {
            TrainedModel::Dbn(m) => m.check(),
            TrainedModel::Mlp(m) => m.check(),
            TrainedModel::Elm(m) => m.check(),
        };
        checked.map_err(|e| Error::document("layers", e.to_string()))?;
        if model.architecture() != doc.architecture {
            return Err(Error::document(
                "architecture",
                format!(
                    "{:?} does not match the stored layers {:?}",
                    doc.architecture,
                    model.architecture()
                ),
            ));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = parse_document(text)?;
        Self::from_document(&doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Parses a document, turning serde failures into document errors that
/// name the offending field where serde reports one.
fn parse_document<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|f| !f.is_empty())
            .unwrap_or("document")
            .to_string();
        Error::document(field, msg)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    /// Row-major, one row per output unit.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_bias: Option<Vec<f64>>,
}

impl From<&Dense> for LayerDoc {
    fn from(d: &Dense) -> Self {
        Self {
            weights: rows_of(&d.weights),
            bias: d.bias.iter().copied().collect(),
            visible_bias: None,
        }
    }
}

impl LayerDoc {
    fn matrix(&self) -> DMatrix<f64> {
        let cols = self.weights.first().map_or(0, Vec::len);
        DMatrix::from_fn(self.weights.len(), cols, |r, c| self.weights[r][c])
    }

    fn dense(&self) -> Dense {
        Dense {
            weights: self.matrix(),
            bias: DVector::from_column_slice(&self.bias),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadDoc {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl From<&OutputUnit> for HeadDoc {
    fn from(h: &OutputUnit) -> Self {
        Self {
            weights: h.weights.iter().copied().collect(),
            bias: h.bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub architecture: Vec<usize>,
    pub with_indicators: bool,
    pub layers: Vec<LayerDoc>,
    pub head: HeadDoc,
    pub input_scale: Vec<ScaleParams>,
    pub target_scale: ScaleParams,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    pub seed: u64,
}

fn check_finite(field: String, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::document(format!("{field}[{i}]"), "not a finite number")),
        None => Ok(()),
    }
}

impl ModelDocument {
    /// Structural checks that name the first offending field.
    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::document(
                "format",
                format!("expected {MODEL_FORMAT}, found {}", self.format),
            ));
        }
        if self.version != DOCUMENT_VERSION {
            return Err(Error::document(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        let a = &self.architecture;
        if a.len() < 3 || a.last() != Some(&1) {
            return Err(Error::document(
                "architecture",
                format!("{a:?} is not input-hidden...-1"),
            ));
        }
        if self.with_indicators != (a[0] == WIDTH_WITH_INDICATORS) {
            return Err(Error::document(
                "with_indicators",
                format!("disagrees with input width {}", a[0]),
            ));
        }
        if self.layers.len() != a.len() - 2 {
            return Err(Error::document(
                "layers",
                format!("{} layers for architecture {a:?}", self.layers.len()),
            ));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != a[k + 1] {
                return Err(Error::document(
                    format!("layers[{k}].weights"),
                    format!("{} rows, expected {}", l.weights.len(), a[k + 1]),
                ));
            }
            for (r, row) in l.weights.iter().enumerate() {
                if row.len() != a[k] {
                    return Err(Error::document(
                        format!("layers[{k}].weights[{r}]"),
                        format!("{} columns, expected {}", row.len(), a[k]),
                    ));
                }
                check_finite(format!("layers[{k}].weights[{r}]"), row)?;
            }
            if l.bias.len() != a[k + 1] {
                return Err(Error::document(
                    format!("layers[{k}].bias"),
                    format!("{} entries, expected {}", l.bias.len(), a[k + 1]),
                ));
            }
            check_finite(format!("layers[{k}].bias"), &l.bias)?;
            if let Some(vb) = &l.visible_bias {
                if vb.len() != a[k] {
                    return Err(Error::document(
                        format!("layers[{k}].visible_bias"),
                        format!("{} entries, expected {}", vb.len(), a[k]),
                    ));
                }
                check_finite(format!("layers[{k}].visible_bias"), vb)?;
            }
        }
        if self.head.weights.len() != a[a.len() - 2] {
            return Err(Error::document(
                "head.weights",
                format!("{} entries, expected {}", self.head.weights.len(), a[a.len() - 2]),
            ));
        }
        check_finite("head.weights".into(), &self.head.weights)?;
        check_finite("head.bias".into(), &[self.head.bias])?;
        if self.input_scale.len() != a[0] {
            return Err(Error::document(
                "input_scale",
                format!("{} entries, expected {}", self.input_scale.len(), a[0]),
            ));
        }
        for (i, s) in self.input_scale.iter().enumerate() {
            ScaleParams::new(s.min, s.max).map_err(|e| Error::document(format!("input_scale[{i}]"), e.to_string()))?;
        }
        ScaleParams::new(self.target_scale.min, self.target_scale.max)
            .map_err(|e| Error::document("target_scale", e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaDocument {
    pub format: String,
    pub version: u32,
    pub temperature: GumbelModel,
    pub price: GumbelModel,
}

impl CopulaDocument {
    pub fn new(pair: &CopulaPair) -> Self {
        Self {
            format: COPULA_FORMAT.to_string(),
            version: DOCUMENT_VERSION,
            temperature: pair.temperature.clone(),
            price: pair.price.clone(),
        }
    }

    pub fn into_pair(self) -> Result<CopulaPair> {
        if self.format != COPULA_FORMAT {
            return Err(Error::document(
                "format",
                format!("expected {COPULA_FORMAT}, found {}", self.format),
            ));
        }
        if self.version != DOCUMENT_VERSION {
            return Err(Error::document(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        for (name, m) in [("temperature", &self.temperature), ("price", &self.price)] {
            m.validate().map_err(|e| match e {
                Error::Document { field, reason } => Error::document(format!("{name}.{field}"), reason),
                other => other,
            })?;
        }
        Ok(CopulaPair {
            temperature: self.temperature,
            price: self.price,
        })
    }
}

pub fn copula_to_json(pair: &CopulaPair) -> String {
    serde_json::to_string_pretty(&CopulaDocument::new(pair)).expect("copula documents serialize")
}

pub fn copula_from_json(text: &str) -> Result<CopulaPair> {
    parse_document::<CopulaDocument>(text)?.into_pair()
}

pub fn save_copulas(pair: &CopulaPair, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, copula_to_json(pair) + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_copulas(path: impl AsRef<Path>) -> Result<CopulaPair> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    copula_from_json(&text)
}

//! Versioned JSON container for trained predictors.
//!
//! Numeric parameters live in named blocks holding base64-encoded
//! little-endian 64-bit values. Sparse matrices are stored as three blocks
//! (`.indptr`, `.indices`, `.values`) plus a `.shape` block. Missing means
//! are encoded as NaN.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::knn::{KnnModel, SimilarityRows};
use super::{Algorithm, CoClusterModel, FitReport, Hyper, Model, Predictor, SlimModel, SvdModel, SvdPpModel, TrainStats};
use crate::data::{IdIndex, SparseRatingMatrix};
use crate::error::{Error, Result};

pub const FORMAT: &str = "greenrec-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    U64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: String,
}

impl Block {
    fn f64s(shape: Vec<usize>, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            dtype: Dtype::F64,
            shape,
            data: STANDARD.encode(bytes),
        }
    }

    fn u64s(shape: Vec<usize>, values: impl IntoIterator<Item = usize>) -> Self {
        let bytes: Vec<u8> = values.into_iter().flat_map(|v| (v as u64).to_le_bytes()).collect();
        Self {
            dtype: Dtype::U64,
            shape,
            data: STANDARD.encode(bytes),
        }
    }

    fn bytes(&self, name: &str) -> Result<Vec<[u8; 8]>> {
        let raw = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Artifact(format!("block {name}: {e}")))?;
        if raw.len() % 8 != 0 {
            return Err(Error::Artifact(format!("block {name}: length {} not a multiple of 8", raw.len())));
        }
        let expected: usize = self.shape.iter().product();
        if raw.len() / 8 != expected {
            return Err(Error::Artifact(format!(
                "block {name}: {} values for shape {:?}",
                raw.len() / 8,
                self.shape
            )));
        }
        Ok(raw.chunks_exact(8).map(|c| c.try_into().expect("chunk of 8")).collect())
    }
}

/// Serialized form of a [`Predictor`] together with its id indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub algorithm: Algorithm,
    pub hyperparameters: Hyper,
    pub seed: u64,
    pub global_mean: f64,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub report: FitReport,
    pub blocks: BTreeMap<String, Block>,
}

struct Writer(BTreeMap<String, Block>);

impl Writer {
    fn f64s(&mut self, name: &str, shape: Vec<usize>, values: &[f64]) {
        self.0.insert(name.to_string(), Block::f64s(shape, values));
    }

    fn u64s(&mut self, name: &str, values: &[usize]) {
        self.0.insert(name.to_string(), Block::u64s(vec![values.len()], values.iter().copied()));
    }

    fn means(&mut self, name: &str, values: &[Option<f64>]) {
        let v: Vec<f64> = values.iter().map(|m| m.unwrap_or(f64::NAN)).collect();
        self.f64s(name, vec![v.len()], &v);
    }

    fn csr(&mut self, name: &str, rows: &[&[(usize, f64)]], n_cols: usize) {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let (mut indices, mut values) = (Vec::new(), Vec::new());
        for row in rows {
            for &(j, v) in *row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        self.u64s(&format!("{name}.shape"), &[rows.len(), n_cols]);
        self.u64s(&format!("{name}.indptr"), &indptr);
        self.u64s(&format!("{name}.indices"), &indices);
        self.f64s(&format!("{name}.values"), vec![values.len()], &values);
    }

    fn matrix(&mut self, name: &str, m: &SparseRatingMatrix) {
        let rows: Vec<&[(usize, f64)]> = (0..m.n_users()).map(|u| m.user_row(u)).collect();
        self.csr(name, &rows, m.n_items());
    }
}

struct Reader<'a>(&'a BTreeMap<String, Block>);

impl Reader<'_> {
    fn block(&self, name: &str, dtype: Dtype) -> Result<&Block> {
        let b = self
            .0
            .get(name)
            .ok_or_else(|| Error::Artifact(format!("missing block {name}")))?;
        if b.dtype != dtype {
            return Err(Error::Artifact(format!("block {name} has dtype {:?}", b.dtype)));
        }
        Ok(b)
    }

    fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.block(name, Dtype::F64)?.bytes(name)?.into_iter().map(f64::from_le_bytes).collect())
    }

    fn f64s_len(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        let v = self.f64s(name)?;
        if v.len() != len {
            return Err(Error::Artifact(format!("block {name}: expected {len} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn u64s(&self, name: &str) -> Result<Vec<usize>> {
        self.block(name, Dtype::U64)?
            .bytes(name)?
            .into_iter()
            .map(|b| usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Artifact(format!("block {name}: index overflow"))))
            .collect()
    }

    fn means(&self, name: &str, len: usize) -> Result<Vec<Option<f64>>> {
        Ok(self.f64s_len(name, len)?.into_iter().map(|x| (!x.is_nan()).then_some(x)).collect())
    }

    fn csr(&self, name: &str) -> Result<(Vec<Vec<(usize, f64)>>, usize)> {
        let shape = self.u64s(&format!("{name}.shape"))?;
        let [n_rows, n_cols] = shape[..] else {
            return Err(Error::Artifact(format!("block {name}.shape must have 2 values")));
        };
        let indptr = self.u64s(&format!("{name}.indptr"))?;
        let indices = self.u64s(&format!("{name}.indices"))?;
        let values = self.f64s(&format!("{name}.values"))?;
        let valid = indptr.len() == n_rows + 1
            && indptr.first() == Some(&0)
            && indptr.windows(2).all(|w| w[0] <= w[1])
            && indptr.last() == Some(&indices.len())
            && indices.len() == values.len()
            && indices.iter().all(|&j| j < n_cols);
        if !valid {
            return Err(Error::Artifact(format!("sparse block {name} is inconsistent")));
        }
        let rows = indptr
            .windows(2)
            .map(|w| (w[0]..w[1]).map(|p| (indices[p], values[p])).collect())
            .collect();
        Ok((rows, n_cols))
    }

    fn matrix(&self, name: &str) -> Result<SparseRatingMatrix> {
        let (rows, n_cols) = self.csr(name)?;
        let n_rows = rows.len();
        Ok(SparseRatingMatrix::from_entries(
            n_rows,
            n_cols,
            rows.into_iter()
                .enumerate()
                .flat_map(|(u, row)| row.into_iter().map(move |(i, r)| (u, i, r))),
        ))
    }
}

impl ModelArtifact {
    pub fn from_predictor(p: &Predictor, users: &IdIndex, items: &IdIndex) -> Result<Self> {
        if users.len() != p.n_users() || items.len() != p.n_items() {
            return Err(Error::Artifact(format!(
                "id indices ({}x{}) do not match the model ({}x{})",
                users.len(),
                items.len(),
                p.n_users(),
                p.n_items()
            )));
        }
        let mut w = Writer(BTreeMap::new());
        w.means("stats.user_means", &p.stats.user_means);
        w.means("stats.item_means", &p.stats.item_means);
        match &p.model {
            Model::Random | Model::GlobalMean => {}
            Model::ItemNN(m) | Model::UserNN(m) => {
                w.matrix("ratings", &m.ratings);
                let rows: Vec<&[(usize, f64)]> = m.sims.rows.iter().map(Vec::as_slice).collect();
                w.csr("similarity", &rows, rows.len());
            }
            Model::Svd(m) => {
                let f = m.factors;
                w.f64s("offset", vec![1], &[m.offset]);
                w.f64s("user_bias", vec![m.user_bias.len()], &m.user_bias);
                w.f64s("item_bias", vec![m.item_bias.len()], &m.item_bias);
                w.f64s("user_factors", vec![m.user_bias.len(), f], &m.user_factors);
                w.f64s("item_factors", vec![m.item_bias.len(), f], &m.item_factors);
            }
            Model::SvdPp(m) => {
                let f = m.factors;
                let (nu, ni) = (m.user_bias.len(), m.item_bias.len());
                w.f64s("user_bias", vec![nu], &m.user_bias);
                w.f64s("item_bias", vec![ni], &m.item_bias);
                w.f64s("user_factors", vec![nu, f], &m.user_factors);
                w.f64s("item_factors", vec![ni, f], &m.item_factors);
                w.f64s("implicit_factors", vec![ni, f], &m.implicit_factors);
                let rated: Vec<Vec<(usize, f64)>> = m.rated.iter().map(|r| r.iter().map(|&j| (j, 1.0)).collect()).collect();
                let rows: Vec<&[(usize, f64)]> = rated.iter().map(Vec::as_slice).collect();
                w.csr("rated", &rows, ni);
            }
            Model::CoClustering(m) => {
                w.u64s("user_assign", &m.user_assign);
                w.u64s("item_assign", &m.item_assign);
                w.f64s("cocluster_means", vec![m.n_user_clusters, m.n_item_clusters], &m.cocluster_means);
                w.f64s("user_cluster_means", vec![m.n_user_clusters], &m.user_cluster_means);
                w.f64s("item_cluster_means", vec![m.n_item_clusters], &m.item_cluster_means);
            }
            Model::Slim(m) => {
                w.matrix("ratings", &m.ratings);
                let rows: Vec<&[(usize, f64)]> = m.columns.iter().map(Vec::as_slice).collect();
                w.csr("weights", &rows, rows.len());
            }
        }
        Ok(Self {
            format: FORMAT.to_string(),
            version: VERSION,
            algorithm: p.algorithm(),
            hyperparameters: p.hyper,
            seed: p.seed,
            global_mean: p.stats.global_mean,
            user_ids: users.ids().to_vec(),
            item_ids: items.ids().to_vec(),
            report: p.report.clone(),
            blocks: w.0,
        })
    }

    /// Rebuilds the predictor and its id indices.
    pub fn to_predictor(&self) -> Result<(Predictor, IdIndex, IdIndex)> {
        if self.format != FORMAT {
            return Err(Error::Artifact(format!("unknown format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Artifact(format!("unsupported version {}", self.version)));
        }
        if self.hyperparameters.algorithm() != self.algorithm {
            return Err(Error::Artifact("algorithm tag does not match hyperparameters".into()));
        }
        let users = IdIndex::from_ids(self.user_ids.iter().cloned())?;
        let items = IdIndex::from_ids(self.item_ids.iter().cloned())?;
        let (nu, ni) = (users.len(), items.len());
        let r = Reader(&self.blocks);
        let stats = TrainStats {
            global_mean: self.global_mean,
            user_means: r.means("stats.user_means", nu)?,
            item_means: r.means("stats.item_means", ni)?,
        };
        let model = match self.hyperparameters {
            Hyper::Random => Model::Random,
            Hyper::GlobalMean => Model::GlobalMean,
            Hyper::ItemNN(params) | Hyper::UserNN(params) => {
                let ratings = r.matrix("ratings")?;
                let (rows, _) = r.csr("similarity")?;
                let m = KnnModel {
                    params,
                    ratings,
                    sims: SimilarityRows { rows },
                };
                if matches!(self.hyperparameters, Hyper::ItemNN(_)) {
                    Model::ItemNN(m)
                } else {
                    Model::UserNN(m)
                }
            }
            Hyper::Svd(p) => {
                let f = p.factors;
                Model::Svd(SvdModel {
                    factors: f,
                    offset: r.f64s_len("offset", 1)?[0],
                    user_bias: r.f64s_len("user_bias", nu)?,
                    item_bias: r.f64s_len("item_bias", ni)?,
                    user_factors: r.f64s_len("user_factors", nu * f)?,
                    item_factors: r.f64s_len("item_factors", ni * f)?,
                })
            }
            Hyper::SvdPp(p) => {
                let f = p.factors;
                let (rated, _) = r.csr("rated")?;
                Model::SvdPp(SvdPpModel::from_parts(
                    f,
                    self.global_mean,
                    r.f64s_len("user_bias", nu)?,
                    r.f64s_len("item_bias", ni)?,
                    r.f64s_len("user_factors", nu * f)?,
                    r.f64s_len("item_factors", ni * f)?,
                    r.f64s_len("implicit_factors", ni * f)?,
                    rated.into_iter().map(|row| row.into_iter().map(|(j, _)| j).collect()).collect(),
                ))
            }
            Hyper::CoClustering(p) => {
                let (ku, ki) = (p.user_clusters, p.item_clusters);
                let user_assign = r.u64s("user_assign")?;
                let item_assign = r.u64s("item_assign")?;
                if user_assign.len() != nu || item_assign.len() != ni || user_assign.iter().any(|&a| a >= ku) || item_assign.iter().any(|&b| b >= ki) {
                    return Err(Error::Artifact("cluster assignments are inconsistent".into()));
                }
                Model::CoClustering(CoClusterModel {
                    user_assign,
                    item_assign,
                    n_user_clusters: ku,
                    n_item_clusters: ki,
                    cocluster_means: r.f64s_len("cocluster_means", ku * ki)?,
                    user_cluster_means: r.f64s_len("user_cluster_means", ku)?,
                    item_cluster_means: r.f64s_len("item_cluster_means", ki)?,
                })
            }
            Hyper::Slim(_) => {
                let (columns, _) = r.csr("weights")?;
                Model::Slim(SlimModel {
                    columns,
                    ratings: r.matrix("ratings")?,
                })
            }
        };
        let predictor = Predictor {
            hyper: self.hyperparameters,
            seed: self.seed,
            stats,
            model,
            report: self.report.clone(),
        };
        Ok((predictor, users, items))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit, CoClusterParams, KnnParams, Predict, SgdParams, SlimParams};

    fn train() -> SparseRatingMatrix {
        SparseRatingMatrix::from_entries(
            3,
            4,
            [(0, 0, 5.0), (0, 1, 3.0), (1, 0, 4.0), (1, 2, 1.0), (2, 1, 2.0), (2, 2, 5.0), (2, 3, 4.0)],
        )
    }

    #[test]
    fn round_trip_every_algorithm() {
        let users = IdIndex::from_ids(["a", "b", "c"]).unwrap();
        let items = IdIndex::from_ids(["w", "x", "y", "z"]).unwrap();
        let hypers = [
            Hyper::Random,
            Hyper::GlobalMean,
            Hyper::ItemNN(KnnParams::new(2)),
            Hyper::UserNN(KnnParams::new(2)),
            Hyper::Svd(SgdParams::new(3, 0.01, 0.01, 5)),
            Hyper::SvdPp(SgdParams::new(3, 0.01, 0.01, 5)),
            Hyper::CoClustering(CoClusterParams::new(2, 2, 5)),
            Hyper::Slim(SlimParams::new(0.05, 0.05)),
        ];
        for h in hypers {
            let p = fit(&h, &train(), 11).unwrap();
            let json = ModelArtifact::from_predictor(&p, &users, &items).unwrap().to_json().unwrap();
            let (q, u2, i2) = ModelArtifact::from_json(&json).unwrap().to_predictor().unwrap();
            assert_eq!(u2, users);
            assert_eq!(i2, items);
            for u in 0..3 {
                for i in 0..4 {
                    assert_eq!(p.predict(u, i).to_bits(), q.predict(u, i).to_bits(), "{h:?} ({u},{i})");
                }
            }
        }
    }

    #[test]
    fn corrupted_block_rejected() {
        let users = IdIndex::from_ids(["a", "b", "c"]).unwrap();
        let items = IdIndex::from_ids(["w", "x", "y", "z"]).unwrap();
        let p = fit(&Hyper::Svd(SgdParams::new(2, 0.01, 0.01, 2)), &train(), 1).unwrap();
        let mut a = ModelArtifact::from_predictor(&p, &users, &items).unwrap();
        a.blocks.get_mut("user_bias").unwrap().shape = vec![7];
        assert!(a.to_predictor().is_err());
        a.version = 99;
        assert!(a.to_predictor().is_err());
    }
}

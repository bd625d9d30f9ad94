//! Binary model container.
//!
//! All integers are little-endian `u32` unless noted, all reals are
//! little-endian IEEE-754 `f64`. A string is a `u32` byte length followed by
//! UTF-8 bytes; a vector is a `u32` length followed by its reals; a matrix is
//! `u32` rows, `u32` cols, then the entries row-major.
//!
//! ```text
//! magic            4 bytes  "DBNI"
//! version          u32      FORMAT_VERSION
//! -- encoder
//! dataset kind     u8       0 kdd99, 1 nslkdd, 2 unswnb15
//! has header       u8       0 or 1
//! column count     u32
//!   per column:    string name, u8 kind (0 numeric, 1 categorical, 2 label, 3 ignore)
//!                  categorical columns follow with u32 count + that many strings
//! stat count       u32
//!   per stat:      u32 column index, f64 mean, f64 stddev
//! -- taxonomy
//! class count      u32, then class names as strings (index = class id)
//! mapping count    u32, then (string raw label, u32 class id), sorted by label
//! -- pca
//! alpha            f64
//! rank             u32
//! mean             vector (n)
//! eigenvalues      vector (n)
//! singular values  vector
//! loading          matrix (n x rank)
//! -- network
//! layer count      u32, then that many u32 widths [input, hidden_1, ...]
//! grbm             matrix weights, vector visible bias, vector hidden bias, vector sigma
//! rbm (each)       matrix weights, vector visible bias, vector hidden bias
//! head             matrix weights (classes x last hidden), vector bias
//! -- trailer
//! checksum         u32      CRC-32 (IEEE) of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{DbnError, Network};
use crate::dataset::{Column, ColumnKind, DatasetKind, Encoder, LabelTaxonomy, NormStats, Schema};
use crate::energy::{GrbmParams, RbmParams};
use crate::pca::PcaModel;

pub const MAGIC: [u8; 4] = *b"DBNI";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to classify raw records: fitted encoder, label table,
/// PCA projection and the network.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    pub encoder: Encoder,
    pub taxonomy: LabelTaxonomy,
    pub pca: PcaModel,
    pub network: Network,
}

impl DbnModel {
    pub fn dataset_kind(&self) -> DatasetKind {
        self.encoder.schema.kind
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&MAGIC);
        w.u32(FORMAT_VERSION);

        let schema = &self.encoder.schema;
        w.u8(schema.kind.to_tag());
        w.u8(schema.has_header as u8);
        w.len(schema.columns.len());
        for (column, vocab) in schema.columns.iter().zip(&schema.vocab) {
            w.str(&column.name);
            w.u8(column.kind.to_tag());
            if column.kind == ColumnKind::Categorical {
                w.len(vocab.len());
                vocab.iter().for_each(|v| w.str(v));
            }
        }
        w.len(self.encoder.norm_stats.len());
        for stat in &self.encoder.norm_stats {
            w.len(stat.column);
            w.f64(stat.mean);
            w.f64(stat.stddev);
        }

        w.len(self.taxonomy.class_names.len());
        self.taxonomy.class_names.iter().for_each(|c| w.str(c));
        w.len(self.taxonomy.raw_to_class.len());
        for (raw, &class) in &self.taxonomy.raw_to_class {
            w.str(raw);
            w.len(class);
        }

        w.f64(self.pca.alpha);
        w.len(self.pca.rank);
        w.vector(&self.pca.mean);
        w.vector(&self.pca.eigenvalues);
        w.vector(&self.pca.singular_values);
        w.matrix(&self.pca.loading);

        let net = &self.network;
        let sizes = net.layer_sizes();
        w.len(sizes.len());
        sizes.iter().for_each(|&s| w.len(s));
        w.matrix(&net.grbm.weights);
        w.vector(&net.grbm.visible_bias);
        w.vector(&net.grbm.hidden_bias);
        w.vector(&net.grbm.sigma);
        for rbm in &net.rbms {
            w.matrix(&rbm.weights);
            w.vector(&rbm.visible_bias);
            w.vector(&rbm.hidden_bias);
        }
        w.matrix(&net.head_weights);
        w.vector(&net.head_bias);

        let checksum = crc32fast::hash(&w.buf);
        w.u32(checksum);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DbnError> {
        if bytes.len() < 8 || bytes[..4] != MAGIC {
            return Err(corrupt("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(DbnError::VersionMismatch {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 {
            return Err(corrupt("truncated"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }

        let mut r = Reader { buf: body, pos: 8 };
        let kind = DatasetKind::from_tag(r.u8()?).ok_or_else(|| corrupt("unknown dataset kind"))?;
        let has_header = r.u8()? != 0;
        let column_count = r.len()?;
        let mut columns = Vec::with_capacity(column_count);
        let mut vocab = Vec::with_capacity(column_count);
        for _ in 0..column_count {
            let name = r.str()?;
            let kind = ColumnKind::from_tag(r.u8()?).ok_or_else(|| corrupt("unknown column kind"))?;
            let mut values = Vec::new();
            if kind == ColumnKind::Categorical {
                for _ in 0..r.len()? {
                    values.push(r.str()?);
                }
            }
            columns.push(Column { name, kind });
            vocab.push(values);
        }
        if columns.iter().filter(|c| c.kind == ColumnKind::Label).count() != 1 {
            return Err(corrupt("schema must have exactly one label column"));
        }
        let mut norm_stats = Vec::new();
        for _ in 0..r.len()? {
            norm_stats.push(NormStats {
                column: r.len()?,
                mean: r.f64()?,
                stddev: r.f64()?,
            });
        }
        let schema = Schema {
            kind,
            columns,
            vocab,
            has_header,
        };
        let numeric: Vec<usize> = schema
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Numeric)
            .map(|(i, _)| i)
            .collect();
        if norm_stats.iter().map(|s| s.column).ne(numeric.iter().copied()) {
            return Err(corrupt("normalization stats do not match numeric columns"));
        }
        let encoder = Encoder { schema, norm_stats };

        let mut class_names = Vec::new();
        for _ in 0..r.len()? {
            class_names.push(r.str()?);
        }
        let mut raw_to_class = BTreeMap::new();
        for _ in 0..r.len()? {
            let raw = r.str()?;
            let class = r.len()?;
            if class >= class_names.len() {
                return Err(corrupt("label maps past the class table"));
            }
            raw_to_class.insert(raw, class);
        }
        let taxonomy = LabelTaxonomy {
            class_names,
            raw_to_class,
        };

        let alpha = r.f64()?;
        let rank = r.len()?;
        let mean = r.vector()?;
        let eigenvalues = r.vector()?;
        let singular_values = r.vector()?;
        let loading = r.matrix()?;
        if loading.dim() != (mean.len(), rank) || eigenvalues.len() != mean.len() {
            return Err(corrupt("PCA block dimensions disagree"));
        }
        if mean.len() != encoder.width() {
            return Err(corrupt("PCA input width differs from encoder width"));
        }
        let pca = PcaModel {
            mean,
            loading,
            eigenvalues,
            singular_values,
            rank,
            alpha,
        };

        let layer_count = r.len()?;
        if layer_count < 2 {
            return Err(corrupt("network needs at least one hidden layer"));
        }
        let mut sizes = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            sizes.push(r.len()?);
        }
        let grbm = GrbmParams {
            weights: r.matrix()?,
            visible_bias: r.vector()?,
            hidden_bias: r.vector()?,
            sigma: r.vector()?,
        };
        let mut rbms = Vec::with_capacity(layer_count - 2);
        for _ in 2..layer_count {
            rbms.push(RbmParams {
                weights: r.matrix()?,
                visible_bias: r.vector()?,
                hidden_bias: r.vector()?,
            });
        }
        let network = Network {
            grbm,
            rbms,
            head_weights: r.matrix()?,
            head_bias: r.vector()?,
        };
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes after network block"));
        }
        check_network(&network, &sizes, rank, taxonomy.num_classes())?;

        Ok(DbnModel {
            encoder,
            taxonomy,
            pca,
            network,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DbnError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| DbnError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DbnError> {
        let bytes = std::fs::read(path).map_err(|source| DbnError::Io {
            path: path.display().to_string(),
            source,
        })?;
        DbnModel::from_bytes(&bytes)
    }
}

fn check_network(net: &Network, sizes: &[usize], rank: usize, classes: usize) -> Result<(), DbnError> {
    let g = &net.grbm;
    let grbm_ok = g.weights.dim() == (sizes[0], sizes[1])
        && g.visible_bias.len() == sizes[0]
        && g.sigma.len() == sizes[0]
        && g.hidden_bias.len() == sizes[1];
    let rbms_ok = net.rbms.iter().zip(sizes[1..].windows(2)).all(|(r, w)| {
        r.weights.dim() == (w[0], w[1]) && r.visible_bias.len() == w[0] && r.hidden_bias.len() == w[1]
    });
    let top = *sizes.last().expect("len >= 2");
    let head_ok = net.head_weights.dim() == (classes, top) && net.head_bias.len() == classes;
    if !(grbm_ok && rbms_ok && head_ok) {
        return Err(corrupt("layer dimensions do not chain"));
    }
    if sizes[0] != rank {
        return Err(corrupt("network input width differs from PCA rank"));
    }
    if g.sigma.iter().any(|&s| !s.is_finite() || s <= 0.0) {
        return Err(corrupt("non-positive sigma"));
    }
    Ok(())
}

fn corrupt(reason: &str) -> DbnError {
    DbnError::CorruptModel(reason.to_string())
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("length fits in u32"));
    }

    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.bytes(s.as_bytes());
    }

    fn vector(&mut self, v: &Array1<f64>) {
        self.len(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    fn matrix(&mut self, m: &Array2<f64>) {
        self.len(m.nrows());
        self.len(m.ncols());
        // iter() walks in logical row-major order regardless of memory layout
        m.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DbnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, DbnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DbnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self) -> Result<usize, DbnError> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64, DbnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String, DbnError> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8 string"))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>, DbnError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("oversized block"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn vector(&mut self) -> Result<Array1<f64>, DbnError> {
        let n = self.len()?;
        Ok(Array1::from(self.reals(n)?))
    }

    fn matrix(&mut self) -> Result<Array2<f64>, DbnError> {
        let rows = self.len()?;
        let cols = self.len()?;
        let n = rows.checked_mul(cols).ok_or_else(|| corrupt("oversized block"))?;
        Array2::from_shape_vec((rows, cols), self.reals(n)?).map_err(|_| corrupt("bad matrix shape"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_schema, fit_encoder, parse_record};
    use crate::pca;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sample_model(seed: u64) -> DbnModel {
        let schema = build_schema(DatasetKind::NslKdd);
        let taxonomy = LabelTaxonomy::builtin(DatasetKind::NslKdd);
        let lines = [
            "0,tcp,http,SF,181,5450,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,8,8,0.00,0.00,0.00,0.00,1.00,0.00,0.00,9,9,1.00,0.00,0.11,0.00,0.00,0.00,0.00,0.00,normal,20",
            "0,udp,private,SF,105,146,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,1,1,0.00,0.00,0.00,0.00,1.00,0.00,0.00,255,254,1.00,0.01,0.00,0.00,0.00,0.00,0.00,0.00,snmpgetattack,15",
            "0,tcp,private,S0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,123,6,1.00,1.00,0.00,0.00,0.05,0.07,0.00,255,26,0.10,0.05,0.00,0.00,1.00,1.00,0.00,0.00,neptune,21",
            "2,icmp,eco_i,SF,20,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,1,1,0.00,0.00,0.00,0.00,1.00,0.00,0.00,2,2,1.00,0.00,1.00,0.00,0.00,0.00,0.00,0.00,ipsweep,18",
        ];
        let records: Vec<_> = lines.iter().map(|l| parse_record(l, 1, &schema).unwrap()).collect();
        let encoder = fit_encoder(&records, &schema, &taxonomy).unwrap();
        let x = encoder.encode_features(&records);
        let pca = pca::fit(x.view(), 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let grbm = GrbmParams::new(pca.rank, 5, &mut rng);
        let rbms = vec![RbmParams::new(5, 3, &mut rng)];
        let mut network = Network::new(grbm, rbms, taxonomy.num_classes()).unwrap();
        network.head_weights = Array2::from_shape_simple_fn(network.head_weights.dim(), || normal.sample(&mut rng));
        DbnModel {
            encoder,
            taxonomy,
            pca,
            network,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let model = sample_model(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dbn");
        model.save(&path).unwrap();
        let loaded = DbnModel::load(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded.to_bytes(), model.to_bytes());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = sample_model(1).to_bytes();
        for cut in [bytes.len() - 1, bytes.len() / 2, 9] {
            assert!(matches!(DbnModel::from_bytes(&bytes[..cut]), Err(DbnError::CorruptModel(_))));
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(matches!(DbnModel::from_bytes(&flipped), Err(DbnError::CorruptModel(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = sample_model(2).to_bytes();
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            DbnModel::from_bytes(&bytes),
            Err(DbnError::VersionMismatch { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn header_layout() {
        let bytes = sample_model(3).to_bytes();
        assert_eq!(&bytes[..4], b"DBNI");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], DatasetKind::NslKdd.to_tag());
    }

    #[test]
    fn missing_file_names_path() {
        let err = DbnModel::load(Path::new("/nonexistent/model.dbn")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.dbn"));
    }
}

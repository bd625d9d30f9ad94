//! Parsing and encoding of KDD-format intrusion datasets.
//!
//! Three families are supported: KDDcup 1999, NSL-KDD and UNSW-NB15. Each
//! record is one comma-separated line. Numeric columns are z-score
//! standardized with statistics fitted on the training split, categorical
//! columns are one-hot expanded over the training vocabulary, and raw attack
//! labels are folded into coarse classes through a [`LabelTaxonomy`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    ArityMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: column `{column}` is numeric but holds `{value}`")]
    NumericParse {
        line: usize,
        column: String,
        value: String,
    },
    #[error("no records to fit the encoder on")]
    EmptyInput,
    #[error("label `{0}` has no class mapping")]
    UnknownLabel(String),
    #[error("unknown dataset kind `{0}` (expected kdd99, nslkdd or unswnb15)")]
    UnknownKind(String),
    #[error("taxonomy line {line}: {reason}")]
    BadTaxonomy { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    Kdd99,
    NslKdd,
    UnswNb15,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Kdd99 => "kdd99",
            DatasetKind::NslKdd => "nslkdd",
            DatasetKind::UnswNb15 => "unswnb15",
        }
    }

    pub(crate) fn to_tag(self) -> u8 {
        match self {
            DatasetKind::Kdd99 => 0,
            DatasetKind::NslKdd => 1,
            DatasetKind::UnswNb15 => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DatasetKind::Kdd99),
            1 => Some(DatasetKind::NslKdd),
            2 => Some(DatasetKind::UnswNb15),
            _ => None,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "kdd99" | "kddcup99" | "kdd" => Ok(DatasetKind::Kdd99),
            "nslkdd" => Ok(DatasetKind::NslKdd),
            "unswnb15" | "unsw" => Ok(DatasetKind::UnswNb15),
            _ => Err(DatasetError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    Ignore,
}

impl ColumnKind {
    pub(crate) fn to_tag(self) -> u8 {
        match self {
            ColumnKind::Numeric => 0,
            ColumnKind::Categorical => 1,
            ColumnKind::Label => 2,
            ColumnKind::Ignore => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ColumnKind::Numeric),
            1 => Some(ColumnKind::Categorical),
            2 => Some(ColumnKind::Label),
            3 => Some(ColumnKind::Ignore),
            _ => None,
        }
    }

    pub fn is_feature(self) -> bool {
        matches!(self, ColumnKind::Numeric | ColumnKind::Categorical)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column layout of one dataset family.
///
/// `vocab` is indexed by column position and stays empty for every
/// non-categorical column, and for categorical columns until
/// [`fit_encoder`] has run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub kind: DatasetKind,
    pub columns: Vec<Column>,
    pub vocab: Vec<Vec<String>>,
    /// The layout is the UNSW-NB15 train/test partition, which carries a
    /// header line.
    pub has_header: bool,
}

const KDD_FEATURES: [(&str, ColumnKind); 41] = {
    use ColumnKind::{Categorical as C, Numeric as N};
    [
        ("duration", N),
        ("protocol_type", C),
        ("service", C),
        ("flag", C),
        ("src_bytes", N),
        ("dst_bytes", N),
        ("land", N),
        ("wrong_fragment", N),
        ("urgent", N),
        ("hot", N),
        ("num_failed_logins", N),
        ("logged_in", N),
        ("num_compromised", N),
        ("root_shell", N),
        ("su_attempted", N),
        ("num_root", N),
        ("num_file_creations", N),
        ("num_shells", N),
        ("num_access_files", N),
        ("num_outbound_cmds", N),
        ("is_host_login", N),
        ("is_guest_login", N),
        ("count", N),
        ("srv_count", N),
        ("serror_rate", N),
        ("srv_serror_rate", N),
        ("rerror_rate", N),
        ("srv_rerror_rate", N),
        ("same_srv_rate", N),
        ("diff_srv_rate", N),
        ("srv_diff_host_rate", N),
        ("dst_host_count", N),
        ("dst_host_srv_count", N),
        ("dst_host_same_srv_rate", N),
        ("dst_host_diff_srv_rate", N),
        ("dst_host_same_src_port_rate", N),
        ("dst_host_srv_diff_host_rate", N),
        ("dst_host_serror_rate", N),
        ("dst_host_srv_serror_rate", N),
        ("dst_host_rerror_rate", N),
        ("dst_host_srv_rerror_rate", N),
    ]
};

/// Full 49-column UNSW-NB15 record as distributed in the raw CSV parts.
const UNSW_RAW: [(&str, ColumnKind); 49] = {
    use ColumnKind::{Categorical as C, Ignore as X, Label as L, Numeric as N};
    [
        ("srcip", X),
        ("sport", X),
        ("dstip", X),
        ("dsport", X),
        ("proto", C),
        ("state", C),
        ("dur", N),
        ("sbytes", N),
        ("dbytes", N),
        ("sttl", N),
        ("dttl", N),
        ("sloss", N),
        ("dloss", N),
        ("service", C),
        ("sload", N),
        ("dload", N),
        ("spkts", N),
        ("dpkts", N),
        ("swin", N),
        ("dwin", N),
        ("stcpb", N),
        ("dtcpb", N),
        ("smeansz", N),
        ("dmeansz", N),
        ("trans_depth", N),
        ("res_bdy_len", N),
        ("sjit", N),
        ("djit", N),
        ("stime", X),
        ("ltime", X),
        ("sintpkt", N),
        ("dintpkt", N),
        ("tcprtt", N),
        ("synack", N),
        ("ackdat", N),
        ("is_sm_ips_ports", N),
        ("ct_state_ttl", N),
        ("ct_flw_http_mthd", N),
        ("is_ftp_login", N),
        ("ct_ftp_cmd", N),
        ("ct_srv_src", N),
        ("ct_srv_dst", N),
        ("ct_dst_ltm", N),
        ("ct_src_ltm", N),
        ("ct_src_dport_ltm", N),
        ("ct_dst_sport_ltm", N),
        ("ct_dst_src_ltm", N),
        ("attack_cat", L),
        ("label", X),
    ]
};

/// UNSW-NB15 training/testing partition (175,341 / 82,332 lines with header).
const UNSW_PARTITION: [(&str, ColumnKind); 45] = {
    use ColumnKind::{Categorical as C, Ignore as X, Label as L, Numeric as N};
    [
        ("id", X),
        ("dur", N),
        ("proto", C),
        ("service", C),
        ("state", C),
        ("spkts", N),
        ("dpkts", N),
        ("sbytes", N),
        ("dbytes", N),
        ("rate", N),
        ("sttl", N),
        ("dttl", N),
        ("sload", N),
        ("dload", N),
        ("sloss", N),
        ("dloss", N),
        ("sinpkt", N),
        ("dinpkt", N),
        ("sjit", N),
        ("djit", N),
        ("swin", N),
        ("stcpb", N),
        ("dtcpb", N),
        ("dwin", N),
        ("tcprtt", N),
        ("synack", N),
        ("ackdat", N),
        ("smean", N),
        ("dmean", N),
        ("trans_depth", N),
        ("response_body_len", N),
        ("ct_srv_src", N),
        ("ct_state_ttl", N),
        ("ct_dst_ltm", N),
        ("ct_src_dport_ltm", N),
        ("ct_dst_sport_ltm", N),
        ("ct_dst_src_ltm", N),
        ("is_ftp_login", N),
        ("ct_ftp_cmd", N),
        ("ct_flw_http_mthd", N),
        ("ct_src_ltm", N),
        ("ct_srv_dst", N),
        ("is_sm_ips_ports", N),
        ("attack_cat", L),
        ("label", X),
    ]
};

fn columns_from(table: &[(&str, ColumnKind)]) -> Vec<Column> {
    table
        .iter()
        .map(|&(name, kind)| Column {
            name: name.to_string(),
            kind,
        })
        .collect()
}

/// Returns the fixed column layout for a dataset family, with empty vocabularies.
pub fn build_schema(kind: DatasetKind) -> Schema {
    let mut columns;
    match kind {
        DatasetKind::Kdd99 => {
            columns = columns_from(&KDD_FEATURES);
            columns.push(Column {
                name: "label".into(),
                kind: ColumnKind::Label,
            });
        }
        DatasetKind::NslKdd => {
            columns = columns_from(&KDD_FEATURES);
            columns.push(Column {
                name: "label".into(),
                kind: ColumnKind::Label,
            });
            columns.push(Column {
                name: "difficulty".into(),
                kind: ColumnKind::Ignore,
            });
        }
        DatasetKind::UnswNb15 => columns = columns_from(&UNSW_RAW),
    }
    Schema::with_columns(kind, columns, false)
}

impl Schema {
    fn with_columns(kind: DatasetKind, columns: Vec<Column>, has_header: bool) -> Self {
        let vocab = vec![Vec::new(); columns.len()];
        Schema {
            kind,
            columns,
            vocab,
            has_header,
        }
    }

    /// Layout of the UNSW-NB15 train/test partition files.
    pub fn unsw_partition() -> Self {
        Schema::with_columns(DatasetKind::UnswNb15, columns_from(&UNSW_PARTITION), true)
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_count(&self) -> usize {
        self.columns.iter().filter(|c| c.kind.is_feature()).count()
    }

    pub fn label_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.kind == ColumnKind::Label)
            .expect("schema has a label column")
    }

    /// Indices of the numeric and categorical columns, in file order.
    pub fn feature_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind.is_feature())
            .map(|(i, _)| i)
    }

    fn header_matches(&self, fields: &[&str]) -> bool {
        fields.len() == self.columns.len()
            && fields
                .iter()
                .zip(&self.columns)
                .all(|(f, c)| f.trim().eq_ignore_ascii_case(&c.name))
    }

    /// Checks a first line for a header row. Returns the layout the rest of
    /// the file should be parsed with when the line is a header.
    pub fn detect_header(&self, line: &str) -> Option<Schema> {
        let fields: Vec<&str> = line.split(',').collect();
        if self.header_matches(&fields) {
            return Some(self.clone());
        }
        if self.kind == DatasetKind::UnswNb15 {
            let partition = Schema::unsw_partition();
            if partition.header_matches(&fields) {
                return Some(partition);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldValue {
    Numeric(f64),
    Categorical(String),
}

/// One parsed dataset row. `values` holds the feature columns only, in file
/// order; ignored columns are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub values: Vec<FieldValue>,
    pub raw_label: String,
}

fn parse_numeric(field: &str, line: usize, column: &str) -> Result<f64, DatasetError> {
    // Raw UNSW-NB15 parts leave some counters blank.
    if field.is_empty() {
        return Ok(0.0);
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DatasetError::NumericParse {
            line,
            column: column.to_string(),
            value: field.to_string(),
        }),
    }
}

/// Parses one labeled line. `line_no` is used in error messages only.
pub fn parse_record(line: &str, line_no: usize, schema: &Schema) -> Result<FeatureRecord, DatasetError> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != schema.arity() {
        return Err(DatasetError::ArityMismatch {
            line: line_no,
            expected: schema.arity(),
            found: fields.len(),
        });
    }
    let mut values = Vec::with_capacity(schema.feature_count());
    let mut raw_label = String::new();
    for (field, column) in fields.iter().zip(&schema.columns) {
        let field = field.trim();
        match column.kind {
            ColumnKind::Numeric => values.push(FieldValue::Numeric(parse_numeric(field, line_no, &column.name)?)),
            ColumnKind::Categorical => values.push(FieldValue::Categorical(field.to_string())),
            ColumnKind::Label => raw_label = field.to_string(),
            ColumnKind::Ignore => {}
        }
    }
    Ok(FeatureRecord { values, raw_label })
}

/// Parses a line that may omit the label. Accepts either the full layout
/// (label read but unused) or the feature columns alone.
pub fn parse_unlabeled(line: &str, line_no: usize, schema: &Schema) -> Result<FeatureRecord, DatasetError> {
    let trimmed = line.trim_end_matches(['\r', '\n']);
    let found = trimmed.split(',').count();
    if found == schema.arity() {
        return parse_record(trimmed, line_no, schema);
    }
    if found != schema.feature_count() {
        return Err(DatasetError::ArityMismatch {
            line: line_no,
            expected: schema.feature_count(),
            found,
        });
    }
    let mut values = Vec::with_capacity(found);
    for (field, idx) in trimmed.split(',').zip(schema.feature_indices()) {
        let column = &schema.columns[idx];
        let field = field.trim();
        values.push(match column.kind {
            ColumnKind::Numeric => FieldValue::Numeric(parse_numeric(field, line_no, &column.name)?),
            _ => FieldValue::Categorical(field.to_string()),
        });
    }
    Ok(FeatureRecord {
        values,
        raw_label: String::new(),
    })
}

/// Writes a record back in the schema's full layout. Ignored columns are
/// left blank.
pub fn format_record(record: &FeatureRecord, schema: &Schema) -> String {
    let mut values = record.values.iter();
    let fields: Vec<String> = schema
        .columns
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Label => record.raw_label.clone(),
            ColumnKind::Ignore => String::new(),
            _ => match values.next() {
                Some(FieldValue::Numeric(v)) => v.to_string(),
                Some(FieldValue::Categorical(s)) => s.clone(),
                None => String::new(),
            },
        })
        .collect();
    fields.join(",")
}

/// Reads every line of a dataset file. A header row is skipped when present;
/// for UNSW-NB15 it also selects the partition layout. Returns the layout
/// actually used alongside the records.
pub fn read_records(path: &Path, schema: &Schema) -> Result<(Schema, Vec<FeatureRecord>), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let reader = BufReader::new(file);
    let mut layout = schema.clone();
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            if let Some(detected) = schema.detect_header(&line) {
                layout = detected;
                continue;
            }
        }
        records.push(parse_record(&line, line_no, &layout)?);
    }
    Ok((layout, records))
}

fn normalize_label(raw: &str) -> String {
    let label = raw.trim().trim_end_matches('.').trim().to_ascii_lowercase();
    if label.is_empty() {
        "normal".to_string()
    } else {
        label
    }
}

/// Mapping from raw attack labels to class ids. Class 0 is always `normal`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTaxonomy {
    pub class_names: Vec<String>,
    pub raw_to_class: BTreeMap<String, usize>,
}

const KDD_TAXONOMY: &str = include_str!("../taxonomy/kdd.tax");
const UNSW_TAXONOMY: &str = include_str!("../taxonomy/unswnb15.tax");

impl LabelTaxonomy {
    /// Parses `raw = category` lines. Blank lines and `#` comments are
    /// skipped. Classes are numbered by first appearance, after `normal`.
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut class_names = vec!["normal".to_string()];
        let mut raw_to_class = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (raw, category) = line.split_once('=').ok_or_else(|| DatasetError::BadTaxonomy {
                line: idx + 1,
                reason: "expected `raw = category`".into(),
            })?;
            let raw = normalize_label(raw);
            let category = normalize_label(category);
            let class = match class_names.iter().position(|c| *c == category) {
                Some(c) => c,
                None => {
                    class_names.push(category);
                    class_names.len() - 1
                }
            };
            if raw_to_class.insert(raw.clone(), class).is_some_and(|prev| prev != class) {
                return Err(DatasetError::BadTaxonomy {
                    line: idx + 1,
                    reason: format!("`{raw}` mapped to two categories"),
                });
            }
        }
        raw_to_class.insert("normal".to_string(), 0);
        Ok(LabelTaxonomy {
            class_names,
            raw_to_class,
        })
    }

    /// The table shipped for a dataset family.
    pub fn builtin(kind: DatasetKind) -> Self {
        let text = match kind {
            DatasetKind::Kdd99 | DatasetKind::NslKdd => KDD_TAXONOMY,
            DatasetKind::UnswNb15 => UNSW_TAXONOMY,
        };
        LabelTaxonomy::parse(text).expect("builtin taxonomy is well formed")
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        LabelTaxonomy::parse(&text)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Maps a raw label to its class id. Labels missing from the table fall
    /// back to a class of the same name.
    pub fn map_label(&self, raw: &str) -> Result<usize, DatasetError> {
        let label = normalize_label(raw);
        if let Some(&class) = self.raw_to_class.get(&label) {
            return Ok(class);
        }
        self.class_names
            .iter()
            .position(|c| *c == label)
            .ok_or_else(|| DatasetError::UnknownLabel(raw.trim().to_string()))
    }
}

pub fn map_label(raw: &str, taxonomy: &LabelTaxonomy) -> Result<usize, DatasetError> {
    taxonomy.map_label(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Position of the column in the schema.
    pub column: usize,
    pub mean: f64,
    pub stddev: f64,
}

/// A schema with fitted vocabularies plus per-column normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub schema: Schema,
    pub norm_stats: Vec<NormStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub data: Array2<f64>,
    pub column_names: Vec<String>,
    pub norm_stats: Vec<NormStats>,
    pub label_ids: Vec<usize>,
}

/// Fits categorical vocabularies (first-seen order) and numeric mean and
/// sample standard deviation on the training records. Every training label
/// must map through `taxonomy`.
pub fn fit_encoder(
    records: &[FeatureRecord],
    schema: &Schema,
    taxonomy: &LabelTaxonomy,
) -> Result<Encoder, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    for record in records {
        taxonomy.map_label(&record.raw_label)?;
    }
    let mut schema = schema.clone();
    let mut norm_stats = Vec::new();
    let m = records.len() as f64;
    for (slot, col) in schema.feature_indices().collect::<Vec<_>>().into_iter().enumerate() {
        match schema.columns[col].kind {
            ColumnKind::Numeric => {
                let value = |r: &FeatureRecord| match r.values[slot] {
                    FieldValue::Numeric(v) => v,
                    FieldValue::Categorical(_) => 0.0,
                };
                let mean = records.iter().map(value).sum::<f64>() / m;
                let stddev = if records.len() > 1 {
                    let ss: f64 = records.iter().map(|r| (value(r) - mean).powi(2)).sum();
                    (ss / (m - 1.0)).sqrt()
                } else {
                    0.0
                };
                norm_stats.push(NormStats {
                    column: col,
                    mean,
                    stddev,
                });
            }
            ColumnKind::Categorical => {
                let vocab = &mut schema.vocab[col];
                vocab.clear();
                for r in records {
                    if let FieldValue::Categorical(s) = &r.values[slot] {
                        if !vocab.contains(s) {
                            vocab.push(s.clone());
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(Encoder { schema, norm_stats })
}

impl Encoder {
    pub fn width(&self) -> usize {
        self.schema
            .feature_indices()
            .map(|c| match self.schema.columns[c].kind {
                ColumnKind::Categorical => self.schema.vocab[c].len(),
                _ => 1,
            })
            .sum()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for c in self.schema.feature_indices() {
            let column = &self.schema.columns[c];
            match column.kind {
                ColumnKind::Categorical => {
                    names.extend(self.schema.vocab[c].iter().map(|v| format!("{}={}", column.name, v)))
                }
                _ => names.push(column.name.clone()),
            }
        }
        names
    }

    fn encode_row(&self, record: &FeatureRecord, out: &mut [f64]) {
        let mut pos = 0;
        let mut stats = self.norm_stats.iter();
        for (slot, c) in self.schema.feature_indices().enumerate() {
            match self.schema.columns[c].kind {
                ColumnKind::Categorical => {
                    let vocab = &self.schema.vocab[c];
                    out[pos..pos + vocab.len()].fill(0.0);
                    if let FieldValue::Categorical(s) = &record.values[slot] {
                        if let Some(hit) = vocab.iter().position(|v| v == s) {
                            out[pos + hit] = 1.0;
                        }
                    }
                    pos += vocab.len();
                }
                _ => {
                    let stat = stats.next().expect("one stat per numeric column");
                    let x = match record.values[slot] {
                        FieldValue::Numeric(v) => v,
                        FieldValue::Categorical(_) => 0.0,
                    };
                    out[pos] = if stat.stddev > 0.0 {
                        (x - stat.mean) / stat.stddev
                    } else {
                        0.0
                    };
                    pos += 1;
                }
            }
        }
    }

    /// Encodes feature values only; labels are not consulted.
    pub fn encode_features(&self, records: &[FeatureRecord]) -> Array2<f64> {
        let width = self.width();
        let mut data = Array2::zeros((records.len(), width));
        for (record, mut row) in records.iter().zip(data.rows_mut()) {
            self.encode_row(record, row.as_slice_mut().expect("standard layout"));
        }
        data
    }
}

/// Standardizes numeric columns, one-hot expands categorical columns and maps
/// labels to class ids.
pub fn encode(
    records: &[FeatureRecord],
    encoder: &Encoder,
    taxonomy: &LabelTaxonomy,
) -> Result<EncodedMatrix, DatasetError> {
    let label_ids = records
        .iter()
        .map(|r| taxonomy.map_label(&r.raw_label))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncodedMatrix {
        data: encoder.encode_features(records),
        column_names: encoder.column_names(),
        norm_stats: encoder.norm_stats.clone(),
        label_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NSL_LINE: &str = "0,tcp,private,S0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,123,6,1.00,1.00,0.00,0.00,0.05,0.07,0.00,255,26,0.10,0.05,0.00,0.00,1.00,1.00,0.00,0.00,neptune,21";

    fn tiny_schema() -> Schema {
        Schema::with_columns(
            DatasetKind::Kdd99,
            vec![
                Column { name: "proto".into(), kind: ColumnKind::Categorical },
                Column { name: "a".into(), kind: ColumnKind::Numeric },
                Column { name: "b".into(), kind: ColumnKind::Numeric },
                Column { name: "label".into(), kind: ColumnKind::Label },
            ],
            false,
        )
    }

    fn tiny_records(lines: &[&str]) -> Vec<FeatureRecord> {
        let schema = tiny_schema();
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| parse_record(l, i + 1, &schema).unwrap())
            .collect()
    }

    #[test]
    fn schema_layouts() {
        let kdd = build_schema(DatasetKind::Kdd99);
        assert_eq!(kdd.feature_count(), 41);
        assert_eq!(kdd.arity(), 42);

        let nsl = build_schema(DatasetKind::NslKdd);
        assert_eq!(nsl.feature_count(), 41);
        assert_eq!(nsl.arity(), 43);
        assert_eq!(nsl.columns[42].kind, ColumnKind::Ignore);

        let unsw = build_schema(DatasetKind::UnswNb15);
        assert_eq!(unsw.arity(), 49);
        assert_eq!(unsw.columns[unsw.label_index()].name, "attack_cat");
        let ignored: Vec<_> = unsw
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Ignore)
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(ignored, ["srcip", "sport", "dstip", "dsport", "stime", "ltime", "label"]);

        let part = Schema::unsw_partition();
        assert_eq!(part.arity(), 45);
        assert_eq!(part.feature_count(), 42);

        for s in [kdd, nsl, unsw, part] {
            assert_eq!(s.columns.iter().filter(|c| c.kind == ColumnKind::Label).count(), 1);
        }
    }

    #[test]
    fn unsw_partition_header_is_detected() {
        let header = UNSW_PARTITION.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(",");
        let raw = build_schema(DatasetKind::UnswNb15);
        assert_eq!(raw.detect_header(&header), Some(Schema::unsw_partition()));
        assert_eq!(raw.detect_header("1,0.1,tcp"), None);
    }

    #[test]
    fn parses_nsl_line() {
        let schema = build_schema(DatasetKind::NslKdd);
        let r = parse_record(NSL_LINE, 1, &schema).unwrap();
        assert_eq!(r.raw_label, "neptune");
        assert_eq!(r.values.len(), 41);
        assert_eq!(r.values[1], FieldValue::Categorical("tcp".into()));
        assert_eq!(r.values[22], FieldValue::Numeric(123.0));
    }

    #[test]
    fn arity_and_numeric_errors_carry_line() {
        let schema = build_schema(DatasetKind::NslKdd);
        let short: Vec<&str> = NSL_LINE.split(',').take(40).collect();
        match parse_record(&short.join(","), 7, &schema) {
            Err(DatasetError::ArityMismatch { line: 7, expected: 43, found: 40 }) => {}
            other => panic!("{other:?}"),
        }
        let bad = NSL_LINE.replacen("0,tcp", "abc,tcp", 1);
        match parse_record(&bad, 3, &schema) {
            Err(DatasetError::NumericParse { line: 3, column, value }) => {
                assert_eq!(column, "duration");
                assert_eq!(value, "abc");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unlabeled_accepts_feature_only_lines() {
        let schema = build_schema(DatasetKind::NslKdd);
        let full = parse_record(NSL_LINE, 1, &schema).unwrap();
        let features: Vec<&str> = NSL_LINE.split(',').take(41).collect();
        let stripped = parse_unlabeled(&features.join(","), 1, &schema).unwrap();
        assert_eq!(stripped.values, full.values);
        assert!(stripped.raw_label.is_empty());
        assert!(parse_unlabeled("1,2,3", 1, &schema).is_err());
    }

    #[test]
    fn vocab_is_first_seen_order() {
        let records = tiny_records(&["tcp,1,5,normal", "udp,3,5,normal", "tcp,2,5,normal"]);
        let enc = fit_encoder(&records, &tiny_schema(), &LabelTaxonomy::builtin(DatasetKind::Kdd99)).unwrap();
        assert_eq!(enc.schema.vocab[0], ["tcp", "udp"]);
    }

    #[test]
    fn norm_stats_use_sample_divisor() {
        let records = tiny_records(&["tcp,1,5,normal", "udp,3,5,normal"]);
        let enc = fit_encoder(&records, &tiny_schema(), &LabelTaxonomy::builtin(DatasetKind::Kdd99)).unwrap();
        // mean 2; squared deviations 1 + 1 over (2 - 1) -> stddev sqrt(2)
        assert_eq!(enc.norm_stats[0].mean, 2.0);
        assert_eq!(enc.norm_stats[0].stddev, 2f64.sqrt());
        // constant column
        assert_eq!(enc.norm_stats[1].stddev, 0.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        let err = fit_encoder(&[], &tiny_schema(), &LabelTaxonomy::builtin(DatasetKind::Kdd99));
        assert!(matches!(err, Err(DatasetError::EmptyInput)));
    }

    #[test]
    fn encoded_width_and_unseen_category() {
        let tax = LabelTaxonomy::builtin(DatasetKind::Kdd99);
        let train = tiny_records(&["tcp,1,5,normal", "udp,3,5,smurf", "tcp,2,5,normal"]);
        let enc = fit_encoder(&train, &tiny_schema(), &tax).unwrap();
        let m = encode(&train, &enc, &tax).unwrap();
        assert_eq!(m.data.ncols(), 4);
        assert_eq!(m.column_names, ["proto=tcp", "proto=udp", "a", "b"]);
        assert_eq!(m.label_ids, [0, 1, 0]);
        // constant column encodes to zeros
        assert!(m.data.column(3).iter().all(|&v| v == 0.0));

        let test = tiny_records(&["icmp,2,5,neptune"]);
        let t = encode(&test, &enc, &tax).unwrap();
        assert_eq!(t.data.row(0).to_vec()[..2], [0.0, 0.0]);
        assert_eq!(t.data[[0, 2]], 0.0);
    }

    #[test]
    fn label_mapping() {
        let nsl = LabelTaxonomy::builtin(DatasetKind::NslKdd);
        assert_eq!(nsl.class_names, ["normal", "dos", "r2l", "u2r", "probe"]);
        assert_eq!(map_label("normal", &nsl).unwrap(), 0);
        assert_eq!(map_label("normal.", &nsl).unwrap(), 0);
        assert_eq!(map_label("neptune", &nsl).unwrap(), 1);
        assert_eq!(map_label("DoS", &nsl).unwrap(), 1);
        assert!(matches!(
            map_label("totally_new_attack_xyz", &nsl),
            Err(DatasetError::UnknownLabel(_))
        ));

        let unsw = LabelTaxonomy::builtin(DatasetKind::UnswNb15);
        assert_eq!(unsw.num_classes(), 10);
        assert_eq!(map_label("", &unsw).unwrap(), 0);
        assert_eq!(map_label(" Backdoors", &unsw).unwrap(), map_label("Backdoor", &unsw).unwrap());
    }

    #[test]
    fn taxonomy_rejects_conflicts() {
        assert!(LabelTaxonomy::parse("a = x\na = y").is_err());
        assert!(LabelTaxonomy::parse("no separator").is_err());
    }

    fn field_strategy() -> impl Strategy<Value = FeatureRecord> {
        (
            prop::collection::vec(-1e12f64..1e12, 2),
            "[a-z_]{1,8}",
            "[a-z]{1,10}",
        )
            .prop_map(|(nums, cat, label)| FeatureRecord {
                values: vec![
                    FieldValue::Categorical(cat),
                    FieldValue::Numeric(nums[0]),
                    FieldValue::Numeric(nums[1]),
                ],
                raw_label: label,
            })
    }

    proptest! {
        #[test]
        fn format_then_parse_round_trips(record in field_strategy()) {
            let schema = tiny_schema();
            let line = format_record(&record, &schema);
            prop_assert_eq!(parse_record(&line, 1, &schema).unwrap(), record);
        }

        #[test]
        fn training_columns_are_standardized(values in prop::collection::vec(-1e3f64..1e3, 3..40)) {
            let lines: Vec<String> = values.iter().map(|v| format!("tcp,{v},1,normal")).collect();
            let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
            let records = tiny_records(&refs);
            let tax = LabelTaxonomy::builtin(DatasetKind::Kdd99);
            let enc = fit_encoder(&records, &tiny_schema(), &tax).unwrap();
            let m = encode(&records, &enc, &tax).unwrap();
            let col = m.data.column(1);
            let n = col.len() as f64;
            let mean = col.sum() / n;
            if enc.norm_stats[0].stddev > 1e-6 {
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((sd - 1.0).abs() < 1e-9);
            }
            // one-hot block sums to one on training rows
            prop_assert!(m.data.column(0).iter().all(|&v| v == 1.0));
            let again = encode(&records, &enc, &tax).unwrap();
            prop_assert_eq!(again.data, m.data);
        }
    }
}

//! Instance file format: UTF-8 JSON, schema version "1". Complex numbers
//! are two-element `[re, im]` arrays; matrices are row-major lists of rows.

use serde::{Deserialize, Serialize};

use qfactor_core::factorise::FactorisationInstance;
use qfactor_core::tensor::CMatrix;
use qfactor_core::tsirelson::MeasurementFamily;
use qfactor_core::{C64, ChoiOperator, CpMap, Operator, SystemLayout};

/// Errors on the load path; both map to exit code 4.
#[derive(Debug)]
pub enum LoadError {
    /// Malformed file, with a line/column or field locus.
    Parse(String),
    /// Well-formed file violating a named invariant.
    Validation(String),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Parse(s) => write!(f, "ParseError: {s}"),
            LoadError::Validation(s) => write!(f, "ValidationError: {s}"),
        }
    }
}

pub type Complex = [f64; 2];
/// Row-major matrix of `[re, im]` entries.
pub type Matrix = Vec<Vec<Complex>>;

pub type Factors = Vec<(String, usize)>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MapSpec {
    #[serde(rename = "in")]
    pub input: Factors,
    pub out: Factors,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kraus: Option<Vec<Matrix>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub choi: Option<Matrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceSpec {
    pub i: String,
    pub k: String,
    pub j: String,
    pub m: MapSpec,
    pub n: MapSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FamilySpec {
    pub layout: Factors,
    /// `settings[i][alpha]` is the operator for setting `i`, outcome `alpha`.
    pub settings: Vec<Vec<Matrix>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FamiliesSpec {
    pub x: FamilySpec,
    pub y: FamilySpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceFile {
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instance: Option<InstanceSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stages: Option<Vec<MapSpec>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub families: Option<FamiliesSpec>,
}

fn layout(factors: &Factors, what: &str) -> Result<SystemLayout, LoadError> {
    SystemLayout::new(factors.clone())
        .map_err(|e| LoadError::Validation(format!("{what}: layout invariant: {e}")))
}

fn matrix(m: &Matrix, rows: usize, cols: usize, what: &str) -> Result<CMatrix, LoadError> {
    if m.len() != rows {
        return Err(LoadError::Validation(format!(
            "{what}: declared shape mismatch: expected {rows} rows, found {}",
            m.len()
        )));
    }
    let mut out = CMatrix::zeros(rows, cols);
    for (r, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(LoadError::Validation(format!(
                "{what}: declared shape mismatch: row {r} has {} entries, expected {cols}",
                row.len()
            )));
        }
        for (c, &[re, im]) in row.iter().enumerate() {
            out[(r, c)] = C64::new(re, im);
        }
    }
    Ok(out)
}

fn matrix_to_spec(m: &CMatrix) -> Matrix {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

impl MapSpec {
    pub fn to_map(&self, what: &str) -> Result<CpMap, LoadError> {
        let inl = layout(&self.input, what)?;
        let outl = layout(&self.out, what)?;
        let din = inl.total_dim();
        let dout = outl.total_dim();
        match (&self.kraus, &self.choi) {
            (Some(kraus), None) => {
                let ops = kraus
                    .iter()
                    .enumerate()
                    .map(|(z, m)| {
                        let mat = matrix(m, dout, din, &format!("{what}.kraus[{z}]"))?;
                        Operator::new(outl.clone(), inl.clone(), mat).map_err(|e| {
                            LoadError::Validation(format!("{what}.kraus[{z}]: {e}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                CpMap::new(ops).map_err(|e| LoadError::Validation(format!("{what}: {e}")))
            }
            (None, Some(choi)) => {
                let dim = dout * din;
                let mat = matrix(choi, dim, dim, &format!("{what}.choi"))?;
                let full = outl
                    .concat(&inl.tilde())
                    .map_err(|e| LoadError::Validation(format!("{what}: {e}")))?;
                let op = Operator::square(full, mat)
                    .map_err(|e| LoadError::Validation(format!("{what}.choi: {e}")))?;
                ChoiOperator::new(op, outl, inl)
                    .and_then(|c| c.to_map())
                    .map_err(|e| LoadError::Validation(format!("{what}.choi: PSD: {e}")))
            }
            _ => Err(LoadError::Validation(format!(
                "{what}: exactly one of `kraus` or `choi` is required"
            ))),
        }
    }

    pub fn from_map(map: &CpMap) -> Self {
        MapSpec {
            input: map.in_layout().factors().to_vec(),
            out: map.out_layout().factors().to_vec(),
            kraus: Some(map.kraus().iter().map(|e| matrix_to_spec(e.mat())).collect()),
            choi: None,
        }
    }
}

impl FamilySpec {
    pub fn to_family(&self, what: &str) -> Result<MeasurementFamily, LoadError> {
        let l = layout(&self.layout, what)?;
        let d = l.total_dim();
        let ops = self
            .settings
            .iter()
            .enumerate()
            .map(|(i, setting)| {
                setting
                    .iter()
                    .enumerate()
                    .map(|(a, m)| {
                        let mat = matrix(m, d, d, &format!("{what}.settings[{i}][{a}]"))?;
                        Operator::new(l.clone(), l.clone(), mat).map_err(|e| {
                            LoadError::Validation(format!("{what}.settings[{i}][{a}]: {e}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        MeasurementFamily::new(l, ops)
            .map_err(|e| LoadError::Validation(format!("{what}: PSD/completeness: {e}")))
    }

    pub fn from_family(family: &MeasurementFamily) -> Self {
        FamilySpec {
            layout: family.layout().factors().to_vec(),
            settings: family
                .operators()
                .iter()
                .map(|s| s.iter().map(|o| matrix_to_spec(o.mat())).collect())
                .collect(),
        }
    }
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, LoadError> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| {
            LoadError::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        if file.version != "1" {
            return Err(LoadError::Validation(format!(
                "version: expected \"1\", found {:?}",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LoadError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_instance(&self) -> Result<FactorisationInstance, LoadError> {
        let spec = self
            .instance
            .as_ref()
            .ok_or_else(|| LoadError::Validation("instance: section missing".into()))?;
        let m = spec.m.to_map("instance.m")?;
        let n = spec.n.to_map("instance.n")?;
        FactorisationInstance::new(m, n, spec.i.clone(), spec.k.clone(), spec.j.clone())
            .map_err(|e| LoadError::Validation(format!("instance: {e}")))
    }

    pub fn to_stages(&self) -> Result<Vec<CpMap>, LoadError> {
        let stages = self
            .stages
            .as_ref()
            .ok_or_else(|| LoadError::Validation("stages: section missing".into()))?;
        stages
            .iter()
            .enumerate()
            .map(|(t, s)| s.to_map(&format!("stages[{t}]")))
            .collect()
    }

    pub fn to_families(&self) -> Result<(MeasurementFamily, MeasurementFamily), LoadError> {
        let fams = self
            .families
            .as_ref()
            .ok_or_else(|| LoadError::Validation("families: section missing".into()))?;
        Ok((
            fams.x.to_family("families.x")?,
            fams.y.to_family("families.y")?,
        ))
    }

    pub fn from_instance(inst: &FactorisationInstance) -> Self {
        InstanceFile {
            version: "1".into(),
            instance: Some(InstanceSpec {
                i: inst.i_label().to_string(),
                k: inst.k_label().to_string(),
                j: inst.j_label().to_string(),
                m: MapSpec::from_map(inst.m()),
                n: MapSpec::from_map(inst.n()),
            }),
            stages: None,
            families: None,
        }
    }

    pub fn from_stages(stages: &[CpMap]) -> Self {
        InstanceFile {
            version: "1".into(),
            instance: None,
            stages: Some(stages.iter().map(MapSpec::from_map).collect()),
            families: None,
        }
    }

    pub fn from_families(x: &MeasurementFamily, y: &MeasurementFamily) -> Self {
        InstanceFile {
            version: "1".into(),
            instance: None,
            stages: None,
            families: Some(FamiliesSpec {
                x: FamilySpec::from_family(x),
                y: FamilySpec::from_family(y),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema types serialize")
    }
}

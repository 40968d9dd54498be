//! JSON codecs. Every file carries `"format": 1`; complex numbers are
//! `[re, im]` pairs and matrices are row-major nested arrays.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assemblage::Assemblage;
use crate::error::{Result, SteeringError};
use crate::lhs::{LhsComponent, LhsModel};
use crate::linalg::{c, CMat, HermitianMatrix, ProbTable};
use crate::monotones::StrategyParams;
use crate::snio::{KrausSet, SnioMap, Wiring};

pub const FORMAT_VERSION: u32 = 1;

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMat) -> JsonMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_json(rows: &JsonMatrix) -> Result<CMat> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(SteeringError::Format("matrix rows are empty or ragged".into()));
    }
    Ok(CMat::from_fn(n, m, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

fn hermitian_from_json(rows: &JsonMatrix) -> Result<HermitianMatrix> {
    HermitianMatrix::new(matrix_from_json(rows)?)
}

fn check_format(format: u32) -> Result<()> {
    if format != FORMAT_VERSION {
        return Err(SteeringError::Format(format!("unsupported format {format}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

fn format_one() -> u32 {
    FORMAT_VERSION
}

#[derive(Serialize, Deserialize)]
struct MemberJson {
    a: usize,
    x: usize,
    matrix: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
struct AssemblageJson {
    #[serde(default = "format_one")]
    format: u32,
    r: usize,
    s: usize,
    d: usize,
    members: Vec<MemberJson>,
}

impl From<&Assemblage> for AssemblageJson {
    fn from(ass: &Assemblage) -> Self {
        let mut members = Vec::with_capacity(ass.r() * ass.s());
        for x in 0..ass.s() {
            for a in 0..ass.r() {
                members.push(MemberJson { a, x, matrix: matrix_to_json(ass.member(a, x).matrix()) });
            }
        }
        Self { format: FORMAT_VERSION, r: ass.r(), s: ass.s(), d: ass.d(), members }
    }
}

impl AssemblageJson {
    fn build(self) -> Result<Assemblage> {
        check_format(self.format)?;
        let entries = self
            .members
            .iter()
            .map(|m| Ok((m.a, m.x, hermitian_from_json(&m.matrix)?)))
            .collect::<Result<Vec<_>>>()?;
        Assemblage::build(self.r, self.s, self.d, entries)
    }
}

pub fn assemblage_to_json(ass: &Assemblage) -> String {
    to_canonical(&AssemblageJson::from(ass))
}

pub fn assemblage_from_json(text: &str) -> Result<Assemblage> {
    serde_json::from_str::<AssemblageJson>(text)?.build()
}

#[derive(Serialize, Deserialize)]
struct LambdaJson {
    weight: f64,
    /// `[x][a]`
    p_a_given_x: Vec<Vec<f64>>,
    state: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
struct LhsModelJson {
    #[serde(default = "format_one")]
    format: u32,
    r: usize,
    s: usize,
    d: usize,
    lambda: Vec<LambdaJson>,
}

pub fn lhs_model_to_json(model: &LhsModel) -> String {
    let lambda = model
        .components()
        .iter()
        .map(|comp| LambdaJson {
            weight: comp.weight,
            p_a_given_x: comp.p_a_given_x.clone(),
            state: matrix_to_json(comp.state.matrix()),
        })
        .collect();
    to_canonical(&LhsModelJson { format: FORMAT_VERSION, r: model.r(), s: model.s(), d: model.d(), lambda })
}

pub fn lhs_model_from_json(text: &str) -> Result<LhsModel> {
    let f: LhsModelJson = serde_json::from_str(text)?;
    check_format(f.format)?;
    let components = f
        .lambda
        .into_iter()
        .map(|l| Ok(LhsComponent { weight: l.weight, p_a_given_x: l.p_a_given_x, state: hermitian_from_json(&l.state)? }))
        .collect::<Result<Vec<_>>>()?;
    LhsModel::new(f.r, f.s, f.d, components)
}

#[derive(Serialize, Deserialize)]
struct KrausJson {
    omega: usize,
    matrix: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
struct WiringJson {
    s: usize,
    r: usize,
    sf: usize,
    rf: usize,
    /// `[ω][x_f][x]`
    p_x: Vec<Vec<Vec<f64>>>,
    /// `[ω][x_f][x][a][a_f]`
    p_af: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

#[derive(Serialize, Deserialize)]
struct SnioJson {
    #[serde(default = "format_one")]
    format: u32,
    kraus: Vec<KrausJson>,
    wiring: WiringJson,
}

pub fn snio_to_json(snio: &SnioMap) -> String {
    let w = snio.wiring();
    let n = w.n_omega();
    let p_x = (0..n)
        .map(|o| (0..w.s_f()).map(|xf| (0..w.s()).map(|x| w.p_x(x, xf, o)).collect()).collect())
        .collect();
    let p_af = (0..n)
        .map(|o| {
            (0..w.s_f())
                .map(|xf| {
                    (0..w.s())
                        .map(|x| (0..w.r()).map(|a| (0..w.r_f()).map(|af| w.p_af(af, a, x, o, xf)).collect()).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let kraus = snio
        .kraus()
        .ops()
        .iter()
        .enumerate()
        .map(|(omega, k)| KrausJson { omega, matrix: matrix_to_json(k) })
        .collect();
    to_canonical(&SnioJson {
        format: FORMAT_VERSION,
        kraus,
        wiring: WiringJson { s: w.s(), r: w.r(), sf: w.s_f(), rf: w.r_f(), p_x, p_af },
    })
}

pub fn snio_from_json(text: &str) -> Result<SnioMap> {
    let f: SnioJson = serde_json::from_str(text)?;
    check_format(f.format)?;
    let mut kraus = f.kraus;
    kraus.sort_by_key(|k| k.omega);
    if kraus.iter().enumerate().any(|(i, k)| k.omega != i) {
        return Err(SteeringError::Format("Kraus operators must be numbered 0..n".into()));
    }
    let ops = kraus.iter().map(|k| matrix_from_json(&k.matrix)).collect::<Result<Vec<_>>>()?;
    let w = f.wiring;
    let p_x: Vec<f64> = w.p_x.iter().flatten().flatten().copied().collect();
    let p_af: Vec<f64> = w.p_af.iter().flatten().flatten().flatten().flatten().copied().collect();
    let wiring = Wiring::new(w.s, w.r, w.sf, w.rf, ops.len(), p_x, p_af)?;
    SnioMap::new(KrausSet::new(ops)?, wiring)
}

#[derive(Serialize, Deserialize)]
struct EffectJson {
    gamma: usize,
    matrix: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
struct StrategyJson {
    #[serde(default = "format_one")]
    format: u32,
    effects: Vec<EffectJson>,
    /// `[γ][x]`
    p_x_given_gamma: Vec<Vec<f64>>,
}

pub fn strategy_to_json(strategy: &StrategyParams) -> String {
    let effects = strategy
        .effects()
        .iter()
        .enumerate()
        .map(|(gamma, e)| EffectJson { gamma, matrix: matrix_to_json(e) })
        .collect();
    let p = (0..strategy.n_gamma()).map(|g| (0..strategy.s()).map(|x| strategy.p(x, g)).collect()).collect();
    to_canonical(&StrategyJson { format: FORMAT_VERSION, effects, p_x_given_gamma: p })
}

pub fn strategy_from_json(text: &str) -> Result<StrategyParams> {
    let f: StrategyJson = serde_json::from_str(text)?;
    check_format(f.format)?;
    let effects = f.effects.iter().map(|e| matrix_from_json(&e.matrix)).collect::<Result<Vec<_>>>()?;
    let n_gamma = f.p_x_given_gamma.len();
    let s = f.p_x_given_gamma.first().map_or(0, Vec::len);
    if f.p_x_given_gamma.iter().any(|row| row.len() != s) {
        return Err(SteeringError::Format("p_x_given_gamma rows are ragged".into()));
    }
    let flat: Vec<f64> = (0..s).flat_map(|x| f.p_x_given_gamma.iter().map(move |row| row[x])).collect();
    StrategyParams::new(effects, ProbTable::conditional(vec![s, n_gamma], flat)?)
}

/// Source of oracle-derived reference values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub script: String,
    pub solver: String,
    pub date: String,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenEntry {
    /// Fixture file name, relative to the golden file.
    pub fixture: String,
    pub steerable_weight: f64,
    pub robustness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenFile {
    pub format: u32,
    pub provenance: Provenance,
    pub entries: Vec<GoldenEntry>,
}

pub fn golden_from_json(text: &str) -> Result<GoldenFile> {
    let g: GoldenFile = serde_json::from_str(text)?;
    check_format(g.format)?;
    Ok(g)
}

/// Pretty JSON with a trailing newline; floats use the shortest
/// representation that round-trips.
pub fn to_canonical<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory serialization cannot fail");
    s.push('\n');
    s
}

pub fn read_file(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    Ok(std::fs::write(path, text)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

pub fn load_assemblage(path: &Path) -> Result<Assemblage> {
    assemblage_from_json(&read_file(path)?)
}

pub fn load_snio(path: &Path) -> Result<SnioMap> {
    snio_from_json(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemblage::singlet_xz;
    use crate::random::rng_from_seed;
    use crate::snio::{random_snio, RandomSnioSpec};

    #[test]
    fn assemblage_round_trip_is_exact() {
        let mut rng = rng_from_seed(3);
        for ass in [singlet_xz(), LhsModel::random(3, 2, 3, &mut rng).assemble().unwrap()] {
            let text = assemblage_to_json(&ass);
            let back = assemblage_from_json(&text).unwrap();
            assert_eq!(back.members(), ass.members());
            assert_eq!(assemblage_to_json(&back), text);
        }
    }

    #[test]
    fn schema_shape() {
        let v: serde_json::Value = serde_json::from_str(&assemblage_to_json(&singlet_xz())).unwrap();
        assert_eq!(v["format"], 1);
        assert_eq!(v["members"][3]["a"], 1);
        assert_eq!(v["members"][3]["x"], 1);
        assert_eq!(v["members"][0]["matrix"][0][0].as_array().unwrap().len(), 2);
    }

    #[test]
    fn wrong_format_is_rejected() {
        let text = assemblage_to_json(&singlet_xz()).replace("\"format\": 1", "\"format\": 2");
        assert!(matches!(assemblage_from_json(&text), Err(SteeringError::Format(_))));
        assert!(matches!(assemblage_from_json("{"), Err(SteeringError::Json(_))));
    }

    #[test]
    fn model_snio_and_strategy_round_trip() {
        let mut rng = rng_from_seed(9);
        let model = LhsModel::random(2, 2, 2, &mut rng);
        let text = lhs_model_to_json(&model);
        assert_eq!(lhs_model_to_json(&lhs_model_from_json(&text).unwrap()), text);

        let snio = random_snio(&RandomSnioSpec::square(2, 2, 2, 3), &mut rng).unwrap();
        let text = snio_to_json(&snio);
        let back = snio_from_json(&text).unwrap();
        assert_eq!(snio_to_json(&back), text);
        let ass = singlet_xz();
        assert_eq!(back.apply(&ass).unwrap().members(), snio.apply(&ass).unwrap().members());

        let strat = StrategyParams::trivial(2, 2, 1);
        let text = strategy_to_json(&strat);
        assert_eq!(strategy_to_json(&strategy_from_json(&text).unwrap()), text);
    }
}

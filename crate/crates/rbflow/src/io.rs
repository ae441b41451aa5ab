//! On-disk archive for reduced models.
//!
//! An archive is a directory holding `manifest.json` (scalar metadata and the
//! affine coefficient tags) plus one binary file per dense array. Array files
//! carry a four-byte magic, row/column counts as little-endian u64, and the
//! entries as little-endian f64 in column-major order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::{Col, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::assemble::Theta;
use crate::error::Error;
use crate::fom::{Pair, ProblemKind, StabKind};
use crate::reduction::{ReducedAffine, ReducedConvection, ReducedModel, ReducedVec};

const MAGIC: &[u8; 4] = b"RBM1";

pub fn write_mat(path: &Path, m: MatRef<f64>) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_mat(path: &Path) -> Result<Mat<f64>, Error> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Archive(format!("{}: bad magic", path.display())));
    }
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let nrows = u64::from_le_bytes(buf) as usize;
    r.read_exact(&mut buf)?;
    let ncols = u64::from_le_bytes(buf) as usize;
    let mut out = Mat::zeros(nrows, ncols);
    for j in 0..ncols {
        for i in 0..nrows {
            r.read_exact(&mut buf)?;
            out[(i, j)] = f64::from_le_bytes(buf);
        }
    }
    Ok(out)
}

pub fn write_col(path: &Path, v: &Col<f64>) -> Result<(), Error> {
    let m = Mat::from_fn(v.nrows(), 1, |i, _| v[i]);
    write_mat(path, m.as_ref())
}

pub fn read_col(path: &Path) -> Result<Col<f64>, Error> {
    let m = read_mat(path)?;
    if m.ncols() != 1 {
        return Err(Error::Archive(format!("{}: expected a column vector", path.display())));
    }
    Ok(Col::from_fn(m.nrows(), |i| m[(i, 0)]))
}

#[derive(Serialize, Deserialize)]
struct ConvEntry {
    thetas: Vec<String>,
    modes: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    problem: String,
    pair: String,
    stab: String,
    nx: usize,
    ny: usize,
    dt: f64,
    n_steps: usize,
    delta: f64,
    n_u: usize,
    n_s: usize,
    n_p: usize,
    greedy_history: Vec<f64>,
    mass: Vec<String>,
    diffusion: Vec<String>,
    divergence: Vec<String>,
    rhs_f: Vec<String>,
    rhs_g: Vec<String>,
    has_stab_m_tilde: bool,
    stab_b_extra: Option<Vec<String>>,
    has_stab_s: bool,
    conv: Option<ConvEntry>,
}

fn tags_of_affine(a: &ReducedAffine) -> Vec<String> {
    a.terms.iter().map(|(t, _)| t.as_str().to_string()).collect()
}

fn tags_of_vec(a: &ReducedVec) -> Vec<String> {
    a.terms.iter().map(|(t, _)| t.as_str().to_string()).collect()
}

fn write_affine(dir: &Path, name: &str, a: &ReducedAffine) -> Result<(), Error> {
    for (q, (_, m)) in a.terms.iter().enumerate() {
        write_mat(&dir.join(format!("{name}_{q}.bin")), m.as_ref())?;
    }
    Ok(())
}

fn read_affine(dir: &Path, name: &str, tags: &[String]) -> Result<ReducedAffine, Error> {
    let mut terms = Vec::with_capacity(tags.len());
    for (q, tag) in tags.iter().enumerate() {
        let m = read_mat(&dir.join(format!("{name}_{q}.bin")))?;
        terms.push((Theta::parse(tag)?, m));
    }
    Ok(ReducedAffine { terms })
}

fn write_vec(dir: &Path, name: &str, a: &ReducedVec) -> Result<(), Error> {
    for (q, (_, v)) in a.terms.iter().enumerate() {
        write_col(&dir.join(format!("{name}_{q}.bin")), v)?;
    }
    Ok(())
}

fn read_vec(dir: &Path, name: &str, tags: &[String]) -> Result<ReducedVec, Error> {
    let mut terms = Vec::with_capacity(tags.len());
    for (q, tag) in tags.iter().enumerate() {
        let v = read_col(&dir.join(format!("{name}_{q}.bin")))?;
        terms.push((Theta::parse(tag)?, v));
    }
    Ok(ReducedVec { terms })
}

pub fn write_model(model: &ReducedModel, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format: 1,
        problem: model.problem.as_str().to_string(),
        pair: model.pair.as_str().to_string(),
        stab: model.stab.as_str().to_string(),
        nx: model.nx,
        ny: model.ny,
        dt: model.dt,
        n_steps: model.n_steps,
        delta: model.delta,
        n_u: model.n_u,
        n_s: model.n_s,
        n_p: model.n_p,
        greedy_history: model.greedy_history.clone(),
        mass: tags_of_affine(&model.mass),
        diffusion: tags_of_affine(&model.diffusion),
        divergence: tags_of_affine(&model.divergence),
        rhs_f: tags_of_vec(&model.rhs_f),
        rhs_g: tags_of_vec(&model.rhs_g),
        has_stab_m_tilde: model.stab_m_tilde.is_some(),
        stab_b_extra: model.stab_b_extra.as_ref().map(tags_of_affine),
        has_stab_s: model.stab_s.is_some(),
        conv: model.conv.as_ref().map(|c| ConvEntry {
            thetas: c.terms.iter().map(|(t, _)| t.as_str().to_string()).collect(),
            modes: c.terms.first().map_or(0, |(_, mats)| mats.len()),
        }),
    };
    let f = File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &manifest)
        .map_err(|e| Error::Archive(format!("manifest: {e}")))?;

    write_affine(dir, "mass", &model.mass)?;
    write_affine(dir, "diffusion", &model.diffusion)?;
    write_affine(dir, "divergence", &model.divergence)?;
    write_vec(dir, "rhs_f", &model.rhs_f)?;
    write_vec(dir, "rhs_g", &model.rhs_g)?;
    if let Some(m) = &model.stab_m_tilde {
        write_mat(&dir.join("stab_m_tilde.bin"), m.as_ref())?;
    }
    if let Some(a) = &model.stab_b_extra {
        write_affine(dir, "stab_b_extra", a)?;
    }
    if let Some(m) = &model.stab_s {
        write_mat(&dir.join("stab_s.bin"), m.as_ref())?;
    }
    if let Some(c) = &model.conv {
        for (q, (_, mats)) in c.terms.iter().enumerate() {
            for (m, mat) in mats.iter().enumerate() {
                write_mat(&dir.join(format!("conv_{q}_{m}.bin")), mat.as_ref())?;
            }
        }
    }
    write_mat(&dir.join("z_u.bin"), model.z_u.as_ref())?;
    write_mat(&dir.join("z_s.bin"), model.z_s.as_ref())?;
    write_mat(&dir.join("z_p.bin"), model.z_p.as_ref())?;
    write_col(&dir.join("lifting.bin"), &model.lifting)?;
    Ok(())
}

pub fn read_model(dir: &Path) -> Result<ReducedModel, Error> {
    let f = File::open(dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| Error::Archive(format!("manifest: {e}")))?;
    if manifest.format != 1 {
        return Err(Error::Archive(format!("unsupported archive format {}", manifest.format)));
    }

    let conv = match &manifest.conv {
        None => None,
        Some(entry) => {
            let mut terms = Vec::with_capacity(entry.thetas.len());
            for (q, tag) in entry.thetas.iter().enumerate() {
                let mut mats = Vec::with_capacity(entry.modes);
                for m in 0..entry.modes {
                    mats.push(read_mat(&dir.join(format!("conv_{q}_{m}.bin")))?);
                }
                terms.push((Theta::parse(tag)?, mats));
            }
            Some(ReducedConvection { terms })
        }
    };

    let model = ReducedModel {
        problem: ProblemKind::parse(&manifest.problem)?,
        pair: Pair::parse(&manifest.pair)?,
        stab: StabKind::parse(&manifest.stab)?,
        nx: manifest.nx,
        ny: manifest.ny,
        dt: manifest.dt,
        n_steps: manifest.n_steps,
        delta: manifest.delta,
        n_u: manifest.n_u,
        n_s: manifest.n_s,
        n_p: manifest.n_p,
        mass: read_affine(dir, "mass", &manifest.mass)?,
        diffusion: read_affine(dir, "diffusion", &manifest.diffusion)?,
        divergence: read_affine(dir, "divergence", &manifest.divergence)?,
        rhs_f: read_vec(dir, "rhs_f", &manifest.rhs_f)?,
        rhs_g: read_vec(dir, "rhs_g", &manifest.rhs_g)?,
        stab_m_tilde: if manifest.has_stab_m_tilde {
            Some(read_mat(&dir.join("stab_m_tilde.bin"))?)
        } else {
            None
        },
        stab_b_extra: match &manifest.stab_b_extra {
            Some(tags) => Some(read_affine(dir, "stab_b_extra", tags)?),
            None => None,
        },
        stab_s: if manifest.has_stab_s {
            Some(read_mat(&dir.join("stab_s.bin"))?)
        } else {
            None
        },
        conv,
        z_u: read_mat(&dir.join("z_u.bin"))?,
        z_s: read_mat(&dir.join("z_s.bin"))?,
        z_p: read_mat(&dir.join("z_p.bin"))?,
        lifting: read_col(&dir.join("lifting.bin"))?,
        greedy_history: manifest.greedy_history,
    };

    let ne = model.n_u + model.n_s;
    if model.z_u.ncols() != model.n_u
        || model.z_s.ncols() != model.n_s
        || model.z_p.ncols() != model.n_p
    {
        return Err(Error::Archive("basis column counts disagree with manifest".into()));
    }
    if model.mass.terms.iter().any(|(_, m)| m.nrows() != ne || m.ncols() != ne) {
        return Err(Error::Archive("mass block shape disagrees with manifest".into()));
    }
    Ok(model)
}

//! On-disk ROM bundles: the basis, one file pair per GP and a manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GlobalRom, Rom, RomVariant, TdRom, TrainingDesign};
use crate::container;
use crate::error::{Error, Result};
use crate::gpr::TrainedGp;
use crate::pod::ReducedBasis;
use crate::rom::td::{TdCoefficient, TdMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomManifest {
    pub variant: RomVariant,
    pub n: usize,
    pub n_gps: usize,
    pub design: TrainingDesign,
    pub design_hash: String,
    pub kept_steps: Option<Vec<usize>>,
    pub eps_svd: Option<f64>,
    /// Per coefficient: the full spectrum of `Q_ℓ` and the number of retained modes.
    pub td_spectra: Option<Vec<(Vec<f64>, usize)>>,
}

fn gp_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join("gps").join(format!("{name}.json"))
}

pub fn write_rom(rom: &Rom, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("gps"))?;
    rom.basis().write(&dir.join("basis.bin"))?;
    let design = rom.design().clone();
    let mut manifest = RomManifest {
        variant: rom.variant(),
        n: rom.basis().n(),
        n_gps: rom.n_gps(),
        design_hash: design.hash(),
        design,
        kept_steps: None,
        eps_svd: None,
        td_spectra: None,
    };
    match rom {
        Rom::Global(r) => {
            for (l, gp) in r.gps.iter().enumerate() {
                gp.write(&gp_path(dir, &format!("q{l}")))?;
            }
            manifest.kept_steps = Some(r.kept_steps.clone());
        }
        Rom::Td(r) => {
            for (l, c) in r.coefficients.iter().enumerate() {
                for (k, m) in c.modes.iter().enumerate() {
                    m.time_gp.write(&gp_path(dir, &format!("q{l}_k{k}_time")))?;
                    m.param_gp.write(&gp_path(dir, &format!("q{l}_k{k}_param")))?;
                }
            }
            manifest.eps_svd = Some(r.eps_svd);
            manifest.td_spectra = Some(r.coefficients.iter().map(|c| (c.singular_values.clone(), c.rank())).collect());
        }
    }
    container::write_json(&dir.join("manifest.json"), &manifest)
}

pub fn read_manifest(dir: &Path) -> Result<RomManifest> {
    container::read_json(&dir.join("manifest.json"))
}

pub fn read_rom(dir: &Path) -> Result<Rom> {
    let manifest = read_manifest(dir)?;
    let basis = ReducedBasis::read(&dir.join("basis.bin"))?;
    let corrupt = |reason: &str| Error::CorruptContainer { path: dir.join("manifest.json"), reason: reason.into() };
    if basis.n() != manifest.n {
        return Err(corrupt("basis size disagrees with manifest"));
    }
    let rom = match manifest.variant {
        RomVariant::Global => {
            let gps = (0..manifest.n)
                .map(|l| TrainedGp::read(&gp_path(dir, &format!("q{l}"))))
                .collect::<Result<Vec<_>>>()?;
            let kept_steps = manifest.kept_steps.clone().ok_or_else(|| corrupt("missing kept steps"))?;
            Rom::Global(GlobalRom { basis, gps, design: manifest.design.clone(), kept_steps })
        }
        RomVariant::Td => {
            let spectra = manifest.td_spectra.clone().ok_or_else(|| corrupt("missing TD spectra"))?;
            if spectra.len() != manifest.n {
                return Err(corrupt("TD spectra count disagrees with basis"));
            }
            let mut coefficients = Vec::with_capacity(spectra.len());
            for (l, (sv, rank)) in spectra.into_iter().enumerate() {
                let modes = (0..rank)
                    .map(|k| {
                        Ok(TdMode {
                            lambda: sv[k],
                            time_gp: TrainedGp::read(&gp_path(dir, &format!("q{l}_k{k}_time")))?,
                            param_gp: TrainedGp::read(&gp_path(dir, &format!("q{l}_k{k}_param")))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                coefficients.push(TdCoefficient::new(sv, modes, &manifest.design.times)?);
            }
            let eps_svd = manifest.eps_svd.ok_or_else(|| corrupt("missing SVD tolerance"))?;
            Rom::Td(TdRom { basis, coefficients, design: manifest.design.clone(), eps_svd })
        }
    };
    if rom.design().hash() != manifest.design_hash {
        return Err(corrupt("design hash mismatch"));
    }
    Ok(rom)
}

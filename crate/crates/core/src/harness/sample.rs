//! Prior realizations written as gridded CSV.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, SampleKind};
use super::io::{cell, csv_error};
use crate::error::Result;
use crate::grid::white_noise;
use crate::grid::{Domain, Field, Layout, SpectralBasis};
use crate::priors::{
    apply_sqrt_cov, cauchy_increments, cauchy_path, g_map, nonstationary_transform, GMap,
    MaternSpec,
};
use crate::rng::stream;

fn write_grid(path: &Path, field: &Field) -> Result<()> {
    let full = field.to_full(0.0);
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["x1", "x2", "u"]).map_err(csv_error)?;
    for (k, v) in full.values().iter().enumerate() {
        let x = full.domain().coords(Layout::Full, k);
        w.write_record([cell(Some(x[0])), cell(Some(x[1])), cell(Some(*v))])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_profile(path: &Path, v: &Field, ell: &Field, u: &Field) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["x", "v", "ell", "u"]).map_err(csv_error)?;
    for k in 0..u.values().len() {
        let x = u.domain().coords(Layout::Interior, k)[0];
        w.write_record([
            cell(Some(x)),
            cell(Some(v.values()[k])),
            cell(Some(ell.values()[k])),
            cell(Some(u.values()[k])),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes prior draws under `out_dir` and returns the files written.
///
/// Whittle-Matérn draws cover every `(α, τ)` pair on the unit square, one
/// file per pair and draw. Length-scale-modulated draws are 1D and carry
/// the hyperparameter path `v`, the length scale and the field.
pub fn sample_prior(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let s = &config.sample_prior;
    let p = &config.prior;
    let (n, l, count) = (s.n_cells.unwrap(), s.extent.unwrap(), s.count.unwrap());
    let master = config.run.seed.unwrap();
    let mut files = Vec::new();
    match s.kind.unwrap() {
        SampleKind::Matern => {
            let domain = Domain::rectangle(l, l, n, n)?;
            let basis = SpectralBasis::new(&domain);
            for (ia, &alpha) in s.alphas.as_ref().unwrap().iter().enumerate() {
                for (it, &tau) in s.taus.as_ref().unwrap().iter().enumerate() {
                    let spec = MaternSpec::new(alpha, tau);
                    for c in 0..count {
                        let mut rng =
                            stream(master, "sample-prior", &[ia as u64, it as u64, c as u64]);
                        let xi = white_noise(&domain, &mut rng);
                        let u = apply_sqrt_cov(&spec, &basis, &xi)?;
                        let path = out_dir.join(format!("matern_alpha{alpha}_tau{tau}_{c:02}.csv"));
                        write_grid(&path, &u)?;
                        files.push(path);
                    }
                }
            }
        }
        kind => {
            let domain = Domain::interval(l, n)?;
            let basis = SpectralBasis::new(&domain);
            let (floor, cap) = (p.ell_floor.unwrap(), p.ell_cap.unwrap());
            let alpha = p.ns_alpha.unwrap();
            for c in 0..count {
                let mut rng = stream(master, "sample-prior", &[c as u64]);
                let (v, g, tag) = if kind == SampleKind::LengthScaleGauss {
                    let spec = MaternSpec::new(p.v_alpha.unwrap(), p.v_tau.unwrap())
                        .with_amplitude(p.v_amplitude.unwrap())
                        .with_mean(p.v_mean.unwrap());
                    let zeta = white_noise(&domain, &mut rng);
                    (
                        apply_sqrt_cov(&spec, &basis, &zeta)?,
                        GMap::exp(floor, cap),
                        "gauss",
                    )
                } else {
                    let delta = p.cauchy_delta.unwrap();
                    let m = crate::priors::cauchy_increment_count(&domain, delta)?;
                    let inc = cauchy_increments(m, delta, &mut rng)?;
                    let g = GMap::rational(
                        p.g_a.unwrap_or(4.0),
                        p.g_b.unwrap_or(0.0),
                        p.g_c.unwrap_or(1.0),
                        p.g_d.unwrap_or(0.0),
                        floor,
                        cap,
                    );
                    (
                        cauchy_path(&inc, delta, &domain, p.cauchy_interp.unwrap())?,
                        g,
                        "cauchy",
                    )
                };
                let ell = g_map(&g, &v)?;
                let xi = white_noise(&domain, &mut rng);
                let u = nonstationary_transform(alpha, &ell, &xi, &basis)?;
                let path = out_dir.join(format!("length_scale_{tag}_{c:02}.csv"));
                write_profile(&path, &v, &ell, &u)?;
                files.push(path);
            }
        }
    }
    Ok(files)
}

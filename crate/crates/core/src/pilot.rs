//! Pixel-space vs latent-space upsampling study.
//!
//! For each corpus image `x` and scale factor `r`, three reconstructions are
//! compared:
//!
//! ```text
//! ref = D(E(x))                        autoencoder round trip only
//! pix = up(D(E(down(x))))              upsample the decoded pixels
//! lat = D(up_latent(E(down(x))))       upsample the latent grid
//! ```
//!
//! PSNR/SSIM of `pix` and `lat` against `ref` quantify how much fidelity each
//! upsampling route loses. Per-image work may be spread over a worker pool;
//! the reduction is by corpus index, so reports are identical for any worker
//! count.

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim, ImageScore, MetricReport};
use crate::models::Autoencoder;
use crate::resample::{bicubic_resample, downsample};
use crate::rng::{stream, RngSeed, StreamDomain};
use crate::tensor::{Shape2D, Tensor};
use crate::Scalar;

/// Run the study at scale factor `r` with `jobs` worker threads.
/// Returns the `(pixel-route, latent-route)` reports.
pub fn run_pilot_study<F: Scalar>(
    corpus: &[(String, Tensor<F>)],
    autoencoder: &dyn Autoencoder<F>,
    r: usize,
    jobs: usize,
) -> Result<(MetricReport, MetricReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if r == 0 {
        return Err(Error::invalid("r", "scale factor must be >= 1"));
    }
    let f = autoencoder.spatial_factor();
    for (id, image) in corpus {
        if image.height() % (r * f) != 0 || image.width() % (r * f) != 0 {
            return Err(Error::invalid(
                "corpus",
                format!(
                    "image `{id}` is {}x{}, not divisible by r*f = {}",
                    image.height(),
                    image.width(),
                    r * f
                ),
            ));
        }
    }

    let jobs = jobs.max(1).min(corpus.len());
    let slots: Vec<Mutex<Option<(ImageScore, ImageScore)>>> =
        (0..corpus.len()).map(|_| Mutex::new(None)).collect();
    let failure: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for worker in 0..jobs {
            let slots = &slots;
            let failure = &failure;
            scope.spawn(move || {
                for (idx, (id, image)) in corpus.iter().enumerate() {
                    if idx % jobs != worker {
                        continue;
                    }
                    match score_image(id, image, autoencoder, r) {
                        Ok(pair) => *slots[idx].lock().unwrap() = Some(pair),
                        Err(e) => {
                            let mut slot = failure.lock().unwrap();
                            if slot.is_none() {
                                *slot = Some(e);
                            }
                            return;
                        }
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut pix_scores = Vec::with_capacity(corpus.len());
    let mut lat_scores = Vec::with_capacity(corpus.len());
    for slot in slots {
        let (p, l) = slot.into_inner().unwrap().expect("all images scored");
        pix_scores.push(p);
        lat_scores.push(l);
    }
    Ok((
        MetricReport::from_scores("pix", r, pix_scores)?,
        MetricReport::from_scores("lat", r, lat_scores)?,
    ))
}

fn score_image<F: Scalar>(
    id: &str,
    image: &Tensor<F>,
    ae: &dyn Autoencoder<F>,
    r: usize,
) -> Result<(ImageScore, ImageScore)> {
    let full_shape = image.shape();
    let reference = ae.decode(&ae.encode(image)?)?;

    let down = downsample(image, r)?;
    let small_latent = ae.encode(&down)?;

    let pix = bicubic_resample(&ae.decode(&small_latent)?, full_shape)?;

    let latent_shape = Shape2D::new(
        full_shape.height / ae.spatial_factor(),
        full_shape.width / ae.spatial_factor(),
    )?;
    let lat = ae.decode(&bicubic_resample(&small_latent, latent_shape)?)?;

    let make = |variant: &Tensor<F>| -> Result<ImageScore> {
        Ok(ImageScore {
            id: id.to_string(),
            psnr_db: psnr(variant, &reference, 1.0)?,
            ssim: ssim(variant, &reference)?,
        })
    };
    Ok((make(&pix)?, make(&lat)?))
}

/// CSV with one row per image and variant plus two aggregate rows
/// (`image_id = ALL`).
pub fn pilot_csv(pix: &MetricReport, lat: &MetricReport) -> String {
    let mut out = String::from("image_id,variant,r,psnr_db,ssim\n");
    for (p, l) in pix.scores().iter().zip(lat.scores()) {
        out.push_str(&format!("{},pix,{},{},{}\n", p.id, pix.scale(), p.psnr_db, p.ssim));
        out.push_str(&format!("{},lat,{},{},{}\n", l.id, lat.scale(), l.psnr_db, l.ssim));
    }
    out.push_str(&format!(
        "ALL,pix,{},{},{}\n",
        pix.scale(),
        pix.mean_psnr_db(),
        pix.mean_ssim()
    ));
    out.push_str(&format!(
        "ALL,lat,{},{},{}\n",
        lat.scale(),
        lat.mean_psnr_db(),
        lat.mean_ssim()
    ));
    out
}

/// Seeded synthetic corpus: per image, Gaussian-blurred noise rescaled to
/// [0, 1] with a few solid rectangles and discs blended on top. Band-limited
/// enough to survive down/up resampling, structured enough for SSIM to mean
/// something.
pub fn synthetic_corpus<F: Scalar>(
    count: usize,
    height: usize,
    width: usize,
    seed: RngSeed,
) -> Vec<(String, Tensor<F>)> {
    use rand::Rng;
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, StreamDomain::Corpus, i as u32, 0);
            let sigma = 1.0 + 2.0 * rng.random::<f64>();
            let mut planes: Vec<Vec<f64>> = (0..3)
                .map(|_| {
                    let noise: Vec<f64> =
                        (0..height * width).map(|_| rng.random::<f64>() - 0.5).collect();
                    let blurred = gaussian_blur(&noise, height, width, sigma);
                    normalize_unit(blurred)
                })
                .collect();

            let n_shapes = 2 + (rng.random::<u64>() % 4) as usize;
            for _ in 0..n_shapes {
                let color = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                let alpha = 0.3 + 0.6 * rng.random::<f64>();
                let cy = rng.random::<u64>() as usize % height;
                let cx = rng.random::<u64>() as usize % width;
                let extent = 2 + rng.random::<u64>() as usize % (height.min(width) / 4).max(1);
                let disc = rng.random::<f64>() < 0.5;
                for y in cy.saturating_sub(extent)..(cy + extent).min(height) {
                    for x in cx.saturating_sub(extent)..(cx + extent).min(width) {
                        let inside = if disc {
                            let dy = y as f64 - cy as f64;
                            let dx = x as f64 - cx as f64;
                            dy * dy + dx * dx <= (extent * extent) as f64
                        } else {
                            true
                        };
                        if inside {
                            for (plane, col) in planes.iter_mut().zip(color) {
                                let v = &mut plane[y * width + x];
                                *v = (1.0 - alpha) * *v + alpha * col;
                            }
                        }
                    }
                }
            }

            let mut data = Vec::with_capacity(height * width * 3);
            for idx in 0..height * width {
                for plane in &planes {
                    data.push(F::from_f64_lossy(plane[idx].clamp(0.0, 1.0)));
                }
            }
            let tensor = Tensor::from_vec(height, width, 3, data).expect("constructed in range");
            (format!("synthetic_{i:04}"), tensor)
        })
        .collect()
}

fn gaussian_blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.into_iter().map(|v| v / norm).collect();

    let mut horiz = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let cc = (c as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += kv * plane[r * w + cc];
            }
            horiz[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let rr = (r as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                acc += kv * horiz[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    out
}

fn normalize_unit(mut plane: Vec<f64>) -> Vec<f64> {
    let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    for v in plane.iter_mut() {
        *v = (*v - lo) / span;
    }
    plane
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::OrthogonalPatchAutoencoder;

    fn corpus(count: usize, side: usize, seed: u64) -> Vec<(String, Tensor<f32>)> {
        synthetic_corpus(count, side, side, RngSeed(seed))
    }

    #[test]
    fn corpus_is_seeded_and_in_range() {
        let a = corpus(3, 64, 5);
        let b = corpus(3, 64, 5);
        for ((ida, ta), (idb, tb)) in a.iter().zip(&b) {
            assert_eq!(ida, idb);
            assert_eq!(ta.data(), tb.data());
            assert!(ta.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let c = corpus(3, 64, 6);
        assert_ne!(a[0].1.data(), c[0].1.data());
    }

    #[test]
    fn invertible_autoencoder_at_r1_hits_the_sentinel() {
        // identity-scale resampling is bitwise, so pix == lat == ref exactly
        let ae = OrthogonalPatchAutoencoder::<f32>::new(4, 48, RngSeed(1)).unwrap();
        let images = corpus(2, 32, 9);
        let (pix, lat) = run_pilot_study(&images, &ae, 1, 1).unwrap();
        assert_eq!(pix.mean_psnr_db(), f64::INFINITY);
        assert_eq!(lat.mean_psnr_db(), f64::INFINITY);
        assert!((pix.mean_ssim() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pixel_route_beats_latent_route() {
        let ae = OrthogonalPatchAutoencoder::<f32>::new(8, 4, RngSeed(2)).unwrap();
        let images = corpus(20, 128, 11);
        for r in [2usize, 4] {
            let (pix, lat) = run_pilot_study(&images, &ae, r, 1).unwrap();
            assert!(
                pix.mean_psnr_db() > lat.mean_psnr_db(),
                "r={r}: psnr {} vs {}",
                pix.mean_psnr_db(),
                lat.mean_psnr_db()
            );
            assert!(
                pix.mean_ssim() > lat.mean_ssim(),
                "r={r}: ssim {} vs {}",
                pix.mean_ssim(),
                lat.mean_ssim()
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_the_report() {
        let ae = OrthogonalPatchAutoencoder::<f32>::new(8, 4, RngSeed(2)).unwrap();
        let images = corpus(7, 64, 13);
        let (pix1, lat1) = run_pilot_study(&images, &ae, 2, 1).unwrap();
        let (pix4, lat4) = run_pilot_study(&images, &ae, 2, 4).unwrap();
        assert_eq!(pilot_csv(&pix1, &lat1), pilot_csv(&pix4, &lat4));
    }

    #[test]
    fn csv_row_accounting() {
        let ae = OrthogonalPatchAutoencoder::<f32>::new(8, 4, RngSeed(2)).unwrap();
        let images = corpus(5, 64, 17);
        let (pix, lat) = run_pilot_study(&images, &ae, 2, 2).unwrap();
        let csv = pilot_csv(&pix, &lat);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 5 + 2);
        assert_eq!(lines[0], "image_id,variant,r,psnr_db,ssim");
        assert!(lines[lines.len() - 2].starts_with("ALL,pix,2,"));
        assert!(lines[lines.len() - 1].starts_with("ALL,lat,2,"));
    }

    #[test]
    fn guards_empty_and_misaligned_corpora() {
        let ae = OrthogonalPatchAutoencoder::<f32>::new(8, 4, RngSeed(2)).unwrap();
        let empty: Vec<(String, Tensor<f32>)> = vec![];
        assert!(matches!(run_pilot_study(&empty, &ae, 2, 1), Err(Error::EmptyCorpus)));
        let bad = corpus(1, 40, 3); // 40 not divisible by r*f = 16
        assert!(run_pilot_study(&bad, &ae, 2, 1).is_err());
    }
}

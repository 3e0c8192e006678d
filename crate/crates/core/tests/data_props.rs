mod common;

use proptest::prelude::*;

use common::{random_binary, random_grid};
use turbo_twin::config::Pairing;
use turbo_twin::data::{
    corner_anchors, crop_four, split_train_test, synth_channel, ChannelParams, DatasetManifest,
    ManifestEntry, Split,
};
use turbo_twin::grid::{Authenticity, DigitalTemplate, Grid};

fn manifest(n: usize, seed: u64) -> DatasetManifest {
    let entries = (0..n)
        .map(|i| ManifestEntry {
            id: format!("{i:05}"),
            template: format!("templates/{i:05}.png").into(),
            printed: Some(format!("printed/{i:05}.png").into()),
            authenticity: Authenticity::Original,
            split: Split::Unassigned,
        })
        .collect();
    DatasetManifest::new("unused", entries, Pairing::Paired, seed).unwrap()
}

fn union(a: &Grid, b: &Grid) -> Grid {
    Grid::new(
        a.side(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x.max(*y))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prints_stay_in_range_and_are_reproducible(
        seed in 0u64..1000, blur in 0.0f64..3.0, gain in -0.5f64..0.5, gamma in 0.3f64..3.0, noise in 0.0f64..0.3,
    ) {
        let t = DigitalTemplate::new("t", random_binary(16, seed)).unwrap();
        let p = ChannelParams { blur_sigma: blur, dot_gain: gain, gamma, noise_sigma: noise, seed };
        let y = synth_channel(&t, &p);
        prop_assert!(y.grid().data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(y, synth_channel(&t, &p));
    }

    #[test]
    fn noiseless_channel_is_monotone_in_the_template(seed in 0u64..1000, blur in 0.0f64..3.0, gamma in 0.3f64..3.0) {
        // blur has a nonnegative kernel and gamma is increasing, so more ink never lightens a pixel
        let a = random_binary(16, seed);
        let b = union(&a, &random_binary(16, seed + 1));
        let p = ChannelParams { blur_sigma: blur, dot_gain: 0.0, gamma, noise_sigma: 0.0, seed };
        let ya = synth_channel(&DigitalTemplate::new("a", a).unwrap(), &p);
        let yb = synth_channel(&DigitalTemplate::new("b", b).unwrap(), &p);
        for (x, y) in ya.grid().data().iter().zip(yb.grid().data()) {
            prop_assert!(x <= &(y + 1e-12));
        }
    }

    #[test]
    fn corner_crops_are_the_source_pixels(side in 2usize..40, frac in 0.05f64..1.0, seed in 0u64..100) {
        let crop = ((side as f64 * frac) as usize).max(1);
        let g = random_grid(side, seed, 0.0, 1.0);
        let anchors = corner_anchors(side, crop).unwrap();
        let crops = crop_four(&g, crop).unwrap();
        for ((i0, j0), c) in anchors.iter().zip(&crops) {
            prop_assert!(i0 + crop <= side && j0 + crop <= side);
            for i in 0..crop {
                for j in 0..crop {
                    prop_assert_eq!(c.get(i, j), g.get(i0 + i, j0 + j));
                }
            }
        }
    }

    #[test]
    fn split_partitions_the_manifest(n in 2usize..300, frac in 0.05f64..0.95, seed in 0u64..100) {
        let m = manifest(n, seed);
        let (train, test) = split_train_test(&m, frac).unwrap();
        prop_assert_eq!(train.len(), (n as f64 * frac).round() as usize);
        prop_assert_eq!(train.len() + test.len(), n);
        let mut ids: Vec<&str> = train.entries.iter().chain(&test.entries).map(|e| e.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        prop_assert!(train.entries.iter().all(|e| e.split == Split::Train));
        prop_assert!(test.entries.iter().all(|e| e.split == Split::Test));
    }
}

#[test]
fn default_split_and_crop_sizes() {
    let (train, test) = split_train_test(&manifest(720, 1), 0.8).unwrap();
    assert_eq!((train.len(), test.len()), (576, 144));
    assert_eq!(
        corner_anchors(684, 256).unwrap(),
        [(0, 0), (0, 428), (428, 0), (428, 428)]
    );
}

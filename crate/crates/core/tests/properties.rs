use dgan_core::checkpoint::{decode, encode};
use dgan_core::config::RunConfig;
use dgan_core::datapipe::parse_manifest;
use dgan_core::eval::report::parse_report;
use dgan_core::label::{compose_label_channels, LabelChannel, Mask};
use proptest::prelude::*;

fn vocab() -> Vec<String> {
    dgan_core::config::DEFAULT_LABELS.iter().map(|s| s.to_string()).collect()
}

proptest! {
    #[test]
    fn config_text_round_trips(
        lambdas in (0.0..10.0f64, 0.0..10.0f64, 0.0..1000.0f64),
        lr in 0.0..1.0f64,
        batch in 1usize..64,
        seed in any::<u64>(),
        iters in proptest::option::of(0u64..1_000_000),
        size in prop::sample::select(vec![16usize, 32, 64]),
        dropout in any::<bool>(),
    ) {
        let cfg = RunConfig {
            lambda_diff: lambdas.0,
            lambda_standard: lambdas.1,
            lambda_recon: lambdas.2,
            learning_rate: lr,
            batch_size: batch,
            seed,
            max_iterations: iters,
            image_size: size,
            dropout_at_synthesis: dropout,
            ..RunConfig::default()
        };
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn config_parser_never_panics(text in ".{0,200}") {
        let _ = RunConfig::parse(&text);
    }

    #[test]
    fn manifest_parser_never_panics(text in "[a-z0-9,.# \n/]{0,200}") {
        let _ = parse_manifest(&text, &vocab());
    }

    #[test]
    fn report_parser_never_panics(text in "[a-z0-9_,.\n-]{0,200}") {
        let _ = parse_report(&text);
    }

    #[test]
    fn checkpoint_decoder_rejects_garbage_without_panicking(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        if let Ok(file) = decode(&bytes) {
            prop_assert_eq!(decode(&encode(&file).unwrap()).unwrap(), file);
        }
    }

    #[test]
    fn composition_selects_per_pixel(
        a in proptest::collection::vec(-3.0..3.0f64, 64),
        b in proptest::collection::vec(-3.0..3.0f64, 64),
        m in proptest::collection::vec(any::<bool>(), 64),
    ) {
        let ca = LabelChannel::from_vec(8, a.clone()).unwrap();
        let cb = LabelChannel::from_vec(8, b.clone()).unwrap();
        let mask = Mask::from_fn(8, |r, c| m[r * 8 + c]);
        let out = compose_label_channels(&ca, &cb, &mask).unwrap();
        for i in 0..64 {
            prop_assert_eq!(out.values()[i], if m[i] { a[i] } else { b[i] });
        }
        prop_assert_eq!(compose_label_channels(&ca, &ca, &mask).unwrap(), ca.clone());
    }
}

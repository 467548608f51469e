mod common;

use common::props::*;
use jointpam::config::parse_model_config;
use jointpam::Error;
use proptest::prelude::*;

/// Lines assembled from config-like fragments, so that parsing gets past the
/// first token often enough to reach the deeper error paths.
fn config_text() -> impl Strategy<Value = String> {
    let fragment = prop_oneof![
        Just("[eta_l]".to_string()),
        Just("[eta_ls]".to_string()),
        Just("[eta_s]".to_string()),
        Just("[sampler]".to_string()),
        Just("[priors]".to_string()),
        Just("baseline_pspline()".to_string()),
        Just("random_intercept()".to_string()),
        Just("iterations = 100".to_string()),
        "(linear|pspline|mrf|random_slope)\\([a-z_0-9]{0,4}(, ?(knots|degree|diff|map)=[a-z0-9.]{0,4}){0,2}\\)?",
        "[a-z_=\\[\\](),. 0-9#-]{0,24}",
        ".{0,12}",
    ];
    prop::collection::vec(fragment, 0..12).prop_map(|lines| lines.join("\n"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bspline_rows_sum_to_one(c in spline_case()) {
        partition_of_unity(&c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn difference_penalty_is_psd_with_expected_rank(c in penalty_case()) {
        penalty_psd_rank(&c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn mrf_penalty_is_graph_laplacian(c in graph_case()) {
        mrf_equals_laplacian(&c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn hdi_holds_enough_draws_and_is_shortest(c in hdi_case()) {
        hdi_count_containment(&c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn augmentation_conserves_exposure_and_events(c in surv_case()) {
        exposure_conservation(&c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn config_parsing_is_total(text in config_text()) {
        let lines = text.lines().count().max(1);
        match parse_model_config(&text) {
            Ok(cfg) => prop_assert_eq!(parse_model_config(&cfg.serialize()).unwrap(), cfg),
            Err(Error::Syntax { line, .. }) => prop_assert!((1..=lines + 1).contains(&line)),
            Err(Error::Config(_)) | Err(Error::InvalidInput(_)) => {}
            Err(other) => prop_assert!(false, "unexpected error kind: {}", other),
        }
    }
}

mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cone_is_convex((a, b, t) in common::field_pair()) {
        common::cone_convexity(&a, &b, t)?;
    }

    #[test]
    fn repair_is_idempotent((a, _, _) in common::field_pair()) {
        common::repair_idempotent(&a)?;
    }
}

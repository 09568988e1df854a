//! Every example runs to completion.

macro_rules! examples {
    ($($name:ident => $path:literal),* $(,)?) => {
        $(
            #[path = $path]
            mod $name;

            #[test]
            fn $name() {
                $name::run().unwrap();
            }
        )*
    };
}

examples!(
    estimate_panel => "../examples/estimate_panel.rs",
    repeated_cross_sections => "../examples/repeated_cross_sections.rs",
    staggered_aggregation => "../examples/staggered_aggregation.rs",
    simultaneous_bands => "../examples/simultaneous_bands.rs",
    group_difference => "../examples/group_difference.rs",
    bloom_decomposition => "../examples/bloom_decomposition.rs",
    monte_carlo => "../examples/monte_carlo.rs",
    csv_roundtrip => "../examples/csv_roundtrip.rs",
);

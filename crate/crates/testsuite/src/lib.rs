//! Holds the `acceptance` test target; run it with
//! `cargo test -p flowcut-testsuite --test acceptance`.

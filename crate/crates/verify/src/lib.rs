//! Acceptance suite only; run it with `cargo test -p chaoslab-verify --test acceptance`.

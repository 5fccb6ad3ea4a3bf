//! Holds the acceptance test target (`tests/acceptance.rs`); the library
//! itself is empty.

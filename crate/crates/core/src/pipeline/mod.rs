//! Pipeline orchestration and artifact emission.

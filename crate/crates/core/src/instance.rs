//! Bundled instances (placeholder).

pub mod smoothed;

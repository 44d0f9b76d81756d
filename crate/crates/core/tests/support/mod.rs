pub mod grad_sweep;

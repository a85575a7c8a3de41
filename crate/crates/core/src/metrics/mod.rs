//! Point-set and silhouette shape metrics.

mod emd;
mod lfd;
mod pointset;
mod retrieval;
mod sets;

pub use emd::{
    auction, emd_approx, emd_auction, emd_exact, hungarian, AUCTION_EPS_FACTOR, AUCTION_FINAL_EPS, EXACT_EMD_MAX,
};
pub use lfd::{
    contour_fourier, descriptor, lfd, rasterize, render_silhouettes, trace_contour, view_directions,
    zernike_magnitudes, zernike_orders, LightField, Silhouette, DESCRIPTOR_LEN, FOURIER_COUNT, IMAGE_SIZE, VIEWS,
    ZERNIKE_COUNT, ZERNIKE_ORDER,
};
pub use pointset::{chamfer, sample_surface, PointSet, DEFAULT_SURFACE_SAMPLES};
pub use retrieval::{
    distance_table, histogram, novelty_report, percentile, rank, retrieve_topk, Histogram, NoveltyEntry, NoveltyReport,
    Ranked, RetrievalMetric, NOVELTY_BINS, NOVELTY_PERCENTILES,
};
pub use sets::{distance_matrix, set_metrics, BaseMetric, SetMetrics};

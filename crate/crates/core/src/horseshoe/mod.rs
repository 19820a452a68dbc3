//! Rotational horseshoes: joining continua, adapted rectangles, the Markov crossing
//! criterion and epsilon-chains with jumps.

mod chains;
mod markov;
mod rectangle;

pub use chains::{chain_reachable, ChainOptions};
pub use markov::{
    desk_check, itinerary_bound_check, markov_cross_check, robustness_probe, search_horseshoe, DeskCheck,
    HorseshoeCertificate, ItineraryCheck, RobustnessReport, SearchOutcome,
};
pub use rectangle::{adapted_rectangle, classify_joining, stable_wall, vertical_wall, AdaptedRectangle, JoiningContinuum};

//! Discrete-event simulator for deep learning at the network edge.
//!
//! The crate is layered bottom-up:
//!
//! * [`des`]: simulated clock, event queue, seeded random streams, tracing;
//! * [`lru`]: the bounded LRU cache deployed on caching nodes;
//! * [`net`]: nodes, point-to-point links, routing, packets, applications;
//! * [`dl`]: a self-contained deep-learning kernel (tensors, layers, losses,
//!   SGD, training, testing, model selection, LeNet);
//! * [`apps`]: the edge-learning applications (terminal data generators, edge
//!   trainers, the data-center ensemble aggregator);
//! * [`scenario`]: scenario file format, scenario runner and metrics.

pub mod apps;
pub mod des;
pub mod dl;
pub mod lru;
pub mod net;
pub mod scenario;

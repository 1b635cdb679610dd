use crate::block::BlockSymbol;
use crate::data::SitePlan;
use crate::error::{Error, Result};
use crate::models::{encoder, ArchConfig, Role, HEAD_BUILDING_FLOOR, HEAD_COORDS};
use crate::nn::{mix_seed, Activation, GraphBuilder, Network, Segment};
use crate::scalar::Scalar;

fn common(b: GraphBuilder, symbol: BlockSymbol, arch: &ArchConfig) -> GraphBuilder {
    arch.common_widths
        .iter()
        .fold(b.block(symbol), |b, &w| b.dense(w, Activation::Elu))
}

fn classifier(b: GraphBuilder, site: &SitePlan) -> GraphBuilder {
    b.block(BlockSymbol::C).dense(site.class_width(), Activation::Sigmoid)
}

fn regressor(b: GraphBuilder, arch: &ArchConfig) -> GraphBuilder {
    arch.regression_hidden
        .iter()
        .fold(b.block(BlockSymbol::R), |b, &w| b.dense(w, Activation::Tanh))
        .dense(2, Activation::Linear)
}

/// Stage 1: `E_BF → H_BF → C` (sigmoid over `N_B + N_F`).
/// Stage 2: `E_L → H_L → R` (tanh hidden, linear 2-D output).
/// Reference: shared `ENC → COMMON` trunk feeding `C` and `R` heads.
pub fn build_linked_dnn<T: Scalar>(arch: &ArchConfig, site: &SitePlan, role: Role, seed: u64) -> Result<Network<T>> {
    arch.validate()?;
    let n = site.aps;
    match role {
        Role::Stage(1) => {
            let b = common(encoder(GraphBuilder::new(n), BlockSymbol::EBf, arch), BlockSymbol::HBf, arch);
            let mut net = Network::chain(classifier(b, site).build(seed)?);
            net.rename_head(0, HEAD_BUILDING_FLOOR);
            Ok(net)
        }
        Role::Stage(2) => {
            let b = common(encoder(GraphBuilder::new(n), BlockSymbol::El, arch), BlockSymbol::Hl, arch);
            let mut net = Network::chain(regressor(b, arch).build(seed)?);
            net.rename_head(0, HEAD_COORDS);
            Ok(net)
        }
        Role::Reference => {
            let trunk = common(encoder(GraphBuilder::new(n), BlockSymbol::Encoder, arch), BlockSymbol::Common, arch);
            let width = trunk.width();
            let segments = vec![
                Segment { name: "trunk".into(), source: None, graph: trunk.build(mix_seed(seed, 0))? },
                Segment {
                    name: "classifier".into(),
                    source: Some(0),
                    graph: classifier(GraphBuilder::new(width), site).build(mix_seed(seed, 1))?,
                },
                Segment {
                    name: "regressor".into(),
                    source: Some(0),
                    graph: regressor(GraphBuilder::new(width), arch).build(mix_seed(seed, 2))?,
                },
            ];
            Network::new(segments, vec![(HEAD_BUILDING_FLOOR.into(), 1), (HEAD_COORDS.into(), 2)])
        }
        Role::Stage(s) => Err(Error::Plan(format!("linked-DNN has stages 1 and 2, not {s}"))),
    }
}

use crate::block::BlockSymbol;
use crate::data::SitePlan;
use crate::error::{Error, Result};
use crate::models::{encoder, ArchConfig, Role, HEAD_BUILDING, HEAD_COORDS, HEAD_FLOOR};
use crate::nn::{mix_seed, Activation, GraphBuilder, Network, Segment};
use crate::scalar::Scalar;

fn building_head(b: GraphBuilder, arch: &ArchConfig, site: &SitePlan) -> GraphBuilder {
    arch.building_hidden
        .iter()
        .fold(b.block(BlockSymbol::B), |b, &w| b.dense(w, Activation::Elu))
        .dense(site.buildings(), Activation::Softmax)
}

/// The encoder output is read as one channel; channel-major activations make
/// the final flatten a no-op on memory.
fn conv_stack(b: GraphBuilder, symbol: BlockSymbol, arch: &ArchConfig) -> GraphBuilder {
    let mut b = b.block(symbol);
    let mut in_ch = 1;
    for c in &arch.conv {
        b = b.conv1d(in_ch, c.channels, c.kernel, Activation::Elu);
        in_ch = c.channels;
    }
    b.flatten()
}

fn floor_head(b: GraphBuilder, site: &SitePlan) -> GraphBuilder {
    b.block(BlockSymbol::Hf).dense(site.floors(), Activation::Softmax)
}

fn location_head(b: GraphBuilder) -> GraphBuilder {
    b.block(BlockSymbol::Hl).dense(2, Activation::Linear)
}

/// Stage 1: `E_B → B`. Stage 2: `E_F → C_F → H_F`. Stage 3: `E_L → C_L → H_L`.
/// Reference: `ENC` feeding the `B` head and a shared `CONV` stack that feeds
/// the `H_F` and `H_L` heads.
pub fn build_linked_cnnloc<T: Scalar>(arch: &ArchConfig, site: &SitePlan, role: Role, seed: u64) -> Result<Network<T>> {
    arch.validate()?;
    let n = site.aps;
    let single = |b: GraphBuilder, head: &str| -> Result<Network<T>> {
        let mut net = Network::chain(b.build(seed)?);
        net.rename_head(0, head);
        Ok(net)
    };
    match role {
        Role::Stage(1) => single(building_head(encoder(GraphBuilder::new(n), BlockSymbol::Eb, arch), arch, site), HEAD_BUILDING),
        Role::Stage(2) => {
            let b = conv_stack(encoder(GraphBuilder::new(n), BlockSymbol::Ef, arch), BlockSymbol::Cf, arch);
            single(floor_head(b, site), HEAD_FLOOR)
        }
        Role::Stage(3) => {
            let b = conv_stack(encoder(GraphBuilder::new(n), BlockSymbol::El, arch), BlockSymbol::Cl, arch);
            single(location_head(b), HEAD_COORDS)
        }
        Role::Reference => {
            let enc = encoder(GraphBuilder::new(n), BlockSymbol::Encoder, arch);
            let code = enc.width();
            let conv = conv_stack(GraphBuilder::new(code), BlockSymbol::Conv, arch);
            let flat = conv.width();
            let segments = vec![
                Segment { name: "encoder".into(), source: None, graph: enc.build(mix_seed(seed, 0))? },
                Segment {
                    name: "building".into(),
                    source: Some(0),
                    graph: building_head(GraphBuilder::new(code), arch, site).build(mix_seed(seed, 1))?,
                },
                Segment { name: "conv".into(), source: Some(0), graph: conv.build(mix_seed(seed, 2))? },
                Segment {
                    name: "floor".into(),
                    source: Some(2),
                    graph: floor_head(GraphBuilder::new(flat), site).build(mix_seed(seed, 3))?,
                },
                Segment {
                    name: "location".into(),
                    source: Some(2),
                    graph: location_head(GraphBuilder::new(flat)).build(mix_seed(seed, 4))?,
                },
            ];
            Network::new(
                segments,
                vec![(HEAD_BUILDING.into(), 1), (HEAD_FLOOR.into(), 3), (HEAD_COORDS.into(), 4)],
            )
        }
        Role::Stage(s) => Err(Error::Plan(format!("linked-CNNLoc has stages 1 to 3, not {s}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn uji() -> SitePlan {
        SitePlan::new(vec![4, 4, 5], 520).unwrap()
    }

    #[test]
    fn conv_stack_flattens_to_2211() {
        let a = ArchConfig::default();
        let s2 = build_linked_cnnloc::<f32>(&a, &uji(), Role::Stage(2), 0).unwrap();
        let g = &s2.segments()[0].graph;
        let widths: Vec<usize> = g.layers().iter().map(|l| l.output_width).collect();
        assert!(widths.contains(&(99 * 109)) && widths.contains(&(66 * 88)) && widths.contains(&2211));
        assert_eq!(s2.head_width(0), 5);
    }

    #[test]
    fn stage_heads_and_linked_shapes() {
        let a = ArchConfig::default();
        let s1 = build_linked_cnnloc::<f32>(&a, &uji(), Role::Stage(1), 0).unwrap();
        let s2 = build_linked_cnnloc::<f32>(&a, &uji(), Role::Stage(2), 0).unwrap();
        let s3 = build_linked_cnnloc::<f32>(&a, &uji(), Role::Stage(3), 0).unwrap();
        let p = s1.predict(&Tensor::filled(&[3, 520], 0.3)).unwrap();
        assert_eq!(p[0].cols(), 3);
        for r in 0..3 {
            assert!((p[0].row(r).iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
        assert_eq!(s3.head_width(0), 2);
        assert_eq!(s1.block_shapes(BlockSymbol::Eb), s2.block_shapes(BlockSymbol::Ef));
        assert_eq!(s2.block_shapes(BlockSymbol::Ef), s3.block_shapes(BlockSymbol::El));
        assert_eq!(s2.block_shapes(BlockSymbol::Cf), s3.block_shapes(BlockSymbol::Cl));
        assert!(build_linked_cnnloc::<f32>(&a, &uji(), Role::Stage(4), 0).is_err());
    }

    #[test]
    fn reference_has_three_heads() {
        let r = build_linked_cnnloc::<f32>(&ArchConfig::default(), &uji(), Role::Reference, 0).unwrap();
        let widths: Vec<usize> = (0..3).map(|h| r.head_width(h)).collect();
        assert_eq!(widths, vec![3, 5, 2]);
    }
}

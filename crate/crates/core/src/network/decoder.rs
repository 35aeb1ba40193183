//! Contextual feature-fusion decoder.
//!
//! Encoder level `i` (stride `2^i`) is first projected to a unified width `C(i)`, giving the
//! stage-0 nodes `F_i^0`. Node `F_i^j` then fuses only its neighbours from stage `j - 1`:
//! the coarser `F_{i+1}^{j-1}` (upsampled), `F_i^{j-1}` and, above the finest level, the finer
//! `F_{i-1}^{j-1}` (downsampled). Each stage drops the coarsest level, so with `L` levels the
//! grid is triangular and level `i` finishes at stage `L - i`. Disparity heads read those
//! final nodes.

use burn::module::Module;
use burn::tensor::activation::sigmoid;
use burn::tensor::{backend::Backend, Tensor};

use super::blocks::{
    upsample2x, Activation, ChannelAttention, ConvBlock, ConvNormAct, SeparableConv,
};
use crate::error::{ensure, Result};
use crate::evaluation::complexity::{FeatureShape, Trace, Tracer};

/// A decoder node: resolution level (1 = finest) and fusion stage (0 = extracted features).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub level: usize,
    pub stage: usize,
}

impl NodeId {
    pub fn new(level: usize, stage: usize) -> Self {
        Self { level, stage }
    }
}

/// Topology of the triangular fusion lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionGrid {
    levels: usize,
}

impl FusionGrid {
    pub fn new(levels: usize) -> Result<Self> {
        ensure!(
            levels >= 2,
            "fusion grid needs at least two levels, got {levels}"
        );
        Ok(Self { levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn stages(&self) -> usize {
        self.levels - 1
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.level >= 1 && node.level + node.stage <= self.levels
    }

    /// Fusion nodes (stage ≥ 1) in evaluation order: by stage, then finest level first.
    pub fn nodes(&self) -> Vec<NodeId> {
        (1..=self.stages())
            .flat_map(|j| (1..=self.levels - j).map(move |i| NodeId::new(i, j)))
            .collect()
    }

    /// Inputs of a fusion node as `(up, same, down)`.
    pub fn inputs(&self, node: NodeId) -> (NodeId, NodeId, Option<NodeId>) {
        let prev = node.stage - 1;
        let down = (node.level > 1).then(|| NodeId::new(node.level - 1, prev));
        (
            NodeId::new(node.level + 1, prev),
            NodeId::new(node.level, prev),
            down,
        )
    }

    /// Every `(from, to)` edge of the lattice.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes()
            .into_iter()
            .flat_map(|n| {
                let (up, same, down) = self.inputs(n);
                [Some(up), Some(same), down]
                    .into_iter()
                    .flatten()
                    .map(move |src| (src, n))
            })
            .collect()
    }

    /// The last node computed at `level`.
    pub fn output(&self, level: usize) -> NodeId {
        NodeId::new(level, self.levels - level)
    }
}

/// ε: 1×1 convolution, batch normalisation and ELU, unifying a level to width `C(i)`.
#[derive(Module, Debug)]
pub struct ExtractBlock<B: Backend> {
    pub block: ConvNormAct<B>,
}

impl<B: Backend> ExtractBlock<B> {
    pub fn new(input: usize, output: usize, device: &B::Device) -> Self {
        Self {
            block: ConvNormAct::new([input, output], 1, 1, 1, Activation::Elu, device),
        }
    }

    pub fn forward(&self, x: Tensor<B, 4>) -> Tensor<B, 4> {
        self.block.forward(x)
    }
}

impl<B: Backend> Trace for ExtractBlock<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        self.block.trace(input, t)
    }
}

/// One lattice node. `U` and `D` keep their input width, so the fused concatenation is
/// `C(i+1) + C(i) + C(i-1)` wide before the 3×3 fuse convolution brings it to `C(i)`.
#[derive(Module, Debug)]
pub struct FusionNode<B: Backend> {
    pub up: SeparableConv<B>,
    pub same: SeparableConv<B>,
    pub down: Option<SeparableConv<B>>,
    pub fuse: ConvBlock<B>,
    level: usize,
}

impl<B: Backend> FusionNode<B> {
    /// `widths` holds `C(1..=L)`; `level` is 1-based.
    pub fn new(level: usize, widths: &[usize], device: &B::Device) -> Self {
        let (c_up, c) = (widths[level], widths[level - 1]);
        let c_down = (level > 1).then(|| widths[level - 2]);
        let concat = c_up + c + c_down.unwrap_or(0);
        Self {
            up: SeparableConv::new(c_up, c_up, 1, Activation::Elu, device),
            same: SeparableConv::new(c, c, 1, Activation::Elu, device),
            down: c_down.map(|cd| SeparableConv::new(cd, cd, 2, Activation::Elu, device)),
            fuse: ConvBlock::new(concat, c, device),
            level,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Width of the concatenation fed to the fuse convolution.
    pub fn concat_width(&self) -> usize {
        self.fuse.conv.weight.dims()[1]
    }

    pub fn forward(
        &self,
        up_in: Tensor<B, 4>,
        same_in: Tensor<B, 4>,
        down_in: Option<Tensor<B, 4>>,
    ) -> Result<Tensor<B, 4>> {
        let [n, _, h, w] = same_in.dims();
        let [un, _, uh, uw] = up_in.dims();
        ensure!(
            un == n && 2 * uh == h && 2 * uw == w,
            "level {}: coarser input {uh}x{uw} must be half of {h}x{w}",
            self.level
        );
        let mut parts = vec![
            self.up.forward(upsample2x(up_in)),
            self.same.forward(same_in),
        ];
        match (&self.down, down_in) {
            (Some(block), Some(d)) => {
                let [dn, _, dh, dw] = d.dims();
                ensure!(
                    dn == n && dh == 2 * h && dw == 2 * w,
                    "level {}: finer input {dh}x{dw} must be double {h}x{w}",
                    self.level
                );
                parts.push(block.forward(d));
            }
            (Some(_), None) => {
                return Err(crate::Error::InvalidArgument(format!(
                    "level {} fusion node requires a finer-level input",
                    self.level
                )))
            }
            (None, Some(_)) => {
                return Err(crate::Error::InvalidArgument(
                    "the finest fusion level takes no finer-level input".into(),
                ))
            }
            (None, None) => {}
        }
        Ok(self.fuse.forward(Tensor::cat(parts, 1)))
    }
}

impl<B: Backend> FusionNode<B> {
    /// Traces the node given the shapes of its (up, same, down) inputs.
    fn trace_node(
        &self,
        up: FeatureShape,
        same: FeatureShape,
        down: Option<FeatureShape>,
        t: &mut Tracer,
    ) -> FeatureShape {
        let up = [up[0], up[1] * 2, up[2] * 2];
        let u = t.scoped("up", |t| self.up.trace(up, t));
        let s = t.scoped("same", |t| self.same.trace(same, t));
        let mut width = u[0] + s[0];
        if let (Some(block), Some(d)) = (&self.down, down) {
            width += t.scoped("down", |t| block.trace(d, t))[0];
        }
        t.scoped("fuse", |t| self.fuse.trace([width, same[1], same[2]], t))
    }
}

/// `D_i = sigmoid(S_conv(CA(F_i^out)))` evaluated one octave above the feature.
#[derive(Module, Debug)]
pub struct DisparityHead<B: Backend> {
    pub attention: ChannelAttention<B>,
    pub conv: SeparableConv<B>,
}

impl<B: Backend> DisparityHead<B> {
    pub fn new(channels: usize, ratio: Option<usize>, device: &B::Device) -> Self {
        let hidden = ChannelAttention::<B>::decoder_hidden(channels, ratio);
        Self {
            attention: ChannelAttention::new(channels, hidden, Activation::Relu, device),
            conv: SeparableConv::new(channels, 1, 1, Activation::Identity, device),
        }
    }

    /// Disparity in (0, 1) at twice the resolution of `x`.
    pub fn forward(&self, x: Tensor<B, 4>) -> Tensor<B, 4> {
        sigmoid(self.conv.forward(upsample2x(self.attention.forward(x))))
    }
}

impl<B: Backend> Trace for DisparityHead<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let x = t.scoped("attention", |t| self.attention.trace(input, t));
        let x = t.scoped("conv", |t| self.conv.trace([x[0], x[1] * 2, x[2] * 2], t));
        t.elementwise("sigmoid", x, 1)
    }
}

#[derive(Module, Debug)]
pub struct FusionDecoder<B: Backend> {
    pub extract: Vec<ExtractBlock<B>>,
    /// In [`FusionGrid::nodes`] order.
    pub nodes: Vec<FusionNode<B>>,
    /// Finest scale first.
    pub heads: Vec<DisparityHead<B>>,
}

impl<B: Backend> FusionDecoder<B> {
    pub fn new(
        encoder_widths: &[usize],
        widths: &[usize],
        num_scales: usize,
        attention_ratio: Option<usize>,
        device: &B::Device,
    ) -> Result<Self> {
        ensure!(
            encoder_widths.len() == widths.len(),
            "{} decoder widths for {} pyramid levels",
            widths.len(),
            encoder_widths.len()
        );
        ensure!(
            widths.iter().chain(encoder_widths).all(|&w| w >= 1),
            "channel widths must be positive"
        );
        let grid = FusionGrid::new(widths.len())?;
        ensure!(
            (1..=grid.stages()).contains(&num_scales),
            "num_scales must lie in 1..={}, got {num_scales}",
            grid.stages()
        );
        Ok(Self {
            extract: encoder_widths
                .iter()
                .zip(widths)
                .map(|(&i, &o)| ExtractBlock::new(i, o, device))
                .collect(),
            nodes: grid
                .nodes()
                .iter()
                .map(|n| FusionNode::new(n.level, widths, device))
                .collect(),
            heads: (0..num_scales)
                .map(|s| DisparityHead::new(widths[s], attention_ratio, device))
                .collect(),
        })
    }

    pub fn grid(&self) -> FusionGrid {
        FusionGrid {
            levels: self.extract.len(),
        }
    }

    pub fn num_scales(&self) -> usize {
        self.heads.len()
    }

    /// Applies the extract block of pyramid level `level` (1-based).
    pub fn extract_level(&self, level: usize, x: Tensor<B, 4>) -> Result<Tensor<B, 4>> {
        ensure!(
            (1..=self.extract.len()).contains(&level),
            "unknown pyramid level {level}"
        );
        Ok(self.extract[level - 1].forward(x))
    }

    /// Final-stage features `F_i^out` for levels `1..=num_scales`, finest first.
    pub fn fuse(&self, pyramid: Vec<Tensor<B, 4>>) -> Result<Vec<Tensor<B, 4>>> {
        let grid = self.grid();
        ensure!(
            pyramid.len() == grid.levels(),
            "expected {} pyramid levels, got {}",
            grid.levels(),
            pyramid.len()
        );
        // current[i - 1] holds the latest stage computed at level i.
        let mut current = pyramid
            .into_iter()
            .enumerate()
            .map(|(i, f)| self.extract_level(i + 1, f))
            .collect::<Result<Vec<_>>>()?;
        let mut outputs = vec![None; grid.levels()];
        let mut nodes = grid.nodes().into_iter().zip(&self.nodes).peekable();
        for stage in 1..=grid.stages() {
            let mut next = Vec::with_capacity(grid.levels() - stage);
            while let Some((id, node)) = nodes.next_if(|(id, _)| id.stage == stage) {
                let i = id.level;
                let down = (i > 1).then(|| current[i - 2].clone());
                next.push(node.forward(current[i].clone(), current[i - 1].clone(), down)?);
            }
            // Level `levels - stage + 1` is finished after the previous stage.
            let done = grid.levels() - stage;
            outputs[done] = Some(current[done].clone());
            current = next;
        }
        outputs[0] = current.pop();
        Ok(outputs
            .into_iter()
            .take(self.num_scales())
            .map(|o| o.expect("every output level is produced"))
            .collect())
    }

    pub fn forward(&self, pyramid: Vec<Tensor<B, 4>>) -> Result<Vec<Tensor<B, 4>>> {
        let features = self.fuse(pyramid)?;
        Ok(features
            .into_iter()
            .zip(&self.heads)
            .map(|(f, head)| head.forward(f))
            .collect())
    }

    /// Traces the decoder given the pyramid shapes.
    pub fn trace_pyramid(&self, pyramid: &[FeatureShape], t: &mut Tracer) {
        let grid = self.grid();
        let mut shapes = std::collections::HashMap::new();
        for (i, (block, &shape)) in self.extract.iter().zip(pyramid).enumerate() {
            let out = t.scoped(format!("extract{}", i + 1), |t| block.trace(shape, t));
            shapes.insert(NodeId::new(i + 1, 0), out);
        }
        for (id, node) in grid.nodes().into_iter().zip(&self.nodes) {
            let (up, same, down) = grid.inputs(id);
            let out = t.scoped(format!("node{}_{}", id.level, id.stage), |t| {
                node.trace_node(shapes[&up], shapes[&same], down.map(|d| shapes[&d]), t)
            });
            shapes.insert(id, out);
        }
        for (s, head) in self.heads.iter().enumerate() {
            let f = shapes[&grid.output(s + 1)];
            t.scoped(format!("head{s}"), |t| head.trace(f, t));
        }
    }
}

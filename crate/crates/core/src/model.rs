//! The assembled multi-column network.
//!
//! Every column consumes the same input batch, runs its decoded conv/pool/
//! BN/ReLU stack, flattens channel-major (C,H,W), and applies its FC stage
//! (FC → ReLU → dropout). Column features are concatenated and a shared FC
//! head produces the class logits; softmax lives in the loss.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::genome::{decode, ArchitectureSpec, Genome, LayerSpec, NetworkTemplate};
use crate::nn::checkpoint;
use crate::nn::layers::{BatchNorm2d, Conv2d, Dense, Dropout, MaxPool2, Mode, Relu};
use crate::nn::loss::argmax_rows;
use crate::nn::tensor::Tensor;
use crate::rng::seeded_rng;

/// One executable layer of a column stack.
#[derive(Debug, Clone)]
enum ColumnLayer {
    Conv(Conv2d),
    Pool(MaxPool2),
    Norm(BatchNorm2d),
    Act(Relu),
}

/// One column: the conv stack plus the FC stage feeding the concat.
#[derive(Debug, Clone)]
struct Column {
    layers: Vec<ColumnLayer>,
    fc: Dense,
    fc_act: Relu,
    fc_dropout: Dropout,
    /// (channels, side) entering the flatten, for backward reshape.
    feature_shape: (usize, usize),
}

/// Per-layer `(column, layer, shape)` entries recorded by a traced forward
/// pass, in execution order.
pub type ShapeTrace = Vec<(usize, usize, Vec<usize>)>;

/// Multi-column CNN with a shared classifier head.
#[derive(Debug, Clone)]
pub struct MultiColumnModel {
    pub arch: ArchitectureSpec,
    pub genome: Genome,
    pub template_hash: u64,
    columns: Vec<Column>,
    head: Dense,
    dropout_rng: ChaCha8Rng,
}

/// Builds a model from a genome: decodes the architecture, then initializes
/// parameters in a fixed traversal order so equal seeds give bit-identical
/// models. `dropout_rng` drives train-mode dropout masks; eval never uses it.
pub fn build_model(
    genome: &Genome,
    template: &NetworkTemplate,
    dropout_rate: f64,
    init_rng: &mut ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
) -> Result<MultiColumnModel> {
    let arch = decode(genome, template)?;
    let mut columns = Vec::with_capacity(arch.columns.len());
    for spec in &arch.columns {
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            layers.push(match *layer {
                LayerSpec::Conv { kernel, stride, pad, in_channels, out_channels, .. } => {
                    ColumnLayer::Conv(Conv2d::new(
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                        pad,
                        init_rng,
                    ))
                }
                LayerSpec::MaxPool { .. } => ColumnLayer::Pool(MaxPool2::new()),
                LayerSpec::BatchNorm { channels, .. } => ColumnLayer::Norm(BatchNorm2d::new(channels)),
                LayerSpec::Relu { .. } => ColumnLayer::Act(Relu::new()),
            });
        }
        let (channels, side) = spec
            .layers
            .last()
            .map(LayerSpec::out_shape)
            .ok_or_else(|| Error::usage("column with no layers"))?;
        columns.push(Column {
            layers,
            fc: Dense::new(spec.fc_input, spec.fc_width, init_rng),
            fc_act: Relu::new(),
            fc_dropout: Dropout::new(dropout_rate)?,
            feature_shape: (channels, side),
        });
    }
    let head = Dense::new(arch.concat_width, arch.num_classes, init_rng);
    Ok(MultiColumnModel {
        arch,
        genome: genome.clone(),
        template_hash: template.hash(),
        columns,
        head,
        dropout_rng,
    })
}

impl MultiColumnModel {
    fn check_input(&self, input: &Tensor) -> Result<usize> {
        let shape = input.shape();
        let side = self.arch.input_side;
        if shape.len() != 4 || shape[1] != 1 || shape[2] != side || shape[3] != side {
            return Err(Error::usage(format!(
                "model expects [N, 1, {side}, {side}] input, got {shape:?}"
            )));
        }
        Ok(shape[0])
    }

    /// Forward pass to logits [N, Z]. `trace`, when given, records every
    /// column layer's observed output as (column, layer index, shape).
    fn forward_impl(
        &mut self,
        input: &Tensor,
        mode: Mode,
        mut trace: Option<&mut ShapeTrace>,
    ) -> Result<Tensor> {
        let n = self.check_input(input)?;
        let concat_width = self.arch.concat_width;
        let fc_width = concat_width / self.columns.len();
        let mut concat = Tensor::zeros(&[n, concat_width]);
        for (ci, column) in self.columns.iter_mut().enumerate() {
            let mut x = input.clone();
            for (li, layer) in column.layers.iter_mut().enumerate() {
                x = match layer {
                    ColumnLayer::Conv(conv) => conv.forward(&x)?,
                    ColumnLayer::Pool(pool) => pool.forward(&x)?,
                    ColumnLayer::Norm(norm) => norm.forward(&x, mode)?,
                    ColumnLayer::Act(act) => act.forward(&x),
                };
                if let Some(t) = trace.as_deref_mut() {
                    t.push((ci, li, x.shape().to_vec()));
                }
            }
            // Flatten is channel-major row-major (C,H,W) — exactly the NCHW
            // buffer layout, so it is a pure reshape.
            let flat = x.reshaped(&[n, column.fc.in_width])?;
            let fc_out = column.fc.forward(&flat)?;
            let act_out = column.fc_act.forward(&fc_out);
            let features = column.fc_dropout.forward(&act_out, mode, &mut self.dropout_rng);
            for bi in 0..n {
                let src = &features.data()[bi * fc_width..(bi + 1) * fc_width];
                let dst_off = bi * concat_width + ci * fc_width;
                concat.data_mut()[dst_off..dst_off + fc_width].copy_from_slice(src);
            }
        }
        self.head.forward(&concat)
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        self.forward_impl(input, mode, None)
    }

    /// Forward recording each column layer's observed output shape.
    pub fn forward_with_trace(
        &mut self,
        input: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, ShapeTrace)> {
        let mut trace = Vec::new();
        let logits = self.forward_impl(input, mode, Some(&mut trace))?;
        Ok((logits, trace))
    }

    /// Backward from the loss gradient at the logits. Parameter gradients are
    /// stored on each layer; the most recent forward must have run in train
    /// mode on the same batch.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<()> {
        let grad_concat = self.head.backward(grad_logits)?;
        let n = grad_concat.dim(0);
        let concat_width = self.arch.concat_width;
        let fc_width = concat_width / self.columns.len();
        for (ci, column) in self.columns.iter_mut().enumerate() {
            let mut block = Tensor::zeros(&[n, fc_width]);
            for bi in 0..n {
                let src_off = bi * concat_width + ci * fc_width;
                block.data_mut()[bi * fc_width..(bi + 1) * fc_width]
                    .copy_from_slice(&grad_concat.data()[src_off..src_off + fc_width]);
            }
            let g = column.fc_dropout.backward(&block)?;
            let g = column.fc_act.backward(&g)?;
            let g = column.fc.backward(&g)?;
            let (channels, side) = column.feature_shape;
            let mut g = g.reshaped(&[n, channels, side, side])?;
            for layer in column.layers.iter_mut().rev() {
                g = match layer {
                    ColumnLayer::Conv(conv) => conv.backward(&g)?,
                    ColumnLayer::Pool(pool) => pool.backward(&g)?,
                    ColumnLayer::Norm(norm) => norm.backward(&g)?,
                    ColumnLayer::Act(act) => act.backward(&g)?,
                };
            }
        }
        Ok(())
    }

    /// Visits every trainable parameter with its gradient in a fixed order:
    /// columns before head, layers in execution order, weights before biases.
    /// The order is a format contract — the optimizer's accumulator slots and
    /// the checkpoint layout both depend on it.
    pub fn for_each_parameter<F>(&mut self, mut f: F) -> Result<()>
    where
        F: FnMut(usize, &mut Tensor, &Tensor, &str) -> Result<()>,
    {
        let mut slot = 0;
        for (ci, column) in self.columns.iter_mut().enumerate() {
            for (li, layer) in column.layers.iter_mut().enumerate() {
                match layer {
                    ColumnLayer::Conv(conv) => {
                        f(slot, &mut conv.weights, &conv.grad_weights, &format!("col{ci}.conv{li}.weights"))?;
                        slot += 1;
                        f(slot, &mut conv.bias, &conv.grad_bias, &format!("col{ci}.conv{li}.bias"))?;
                        slot += 1;
                    }
                    ColumnLayer::Norm(norm) => {
                        f(slot, &mut norm.scale, &norm.grad_scale, &format!("col{ci}.bn{li}.scale"))?;
                        slot += 1;
                        f(slot, &mut norm.shift, &norm.grad_shift, &format!("col{ci}.bn{li}.shift"))?;
                        slot += 1;
                    }
                    ColumnLayer::Pool(_) | ColumnLayer::Act(_) => {}
                }
            }
            f(slot, &mut column.fc.weights, &column.fc.grad_weights, &format!("col{ci}.fc.weights"))?;
            slot += 1;
            f(slot, &mut column.fc.bias, &column.fc.grad_bias, &format!("col{ci}.fc.bias"))?;
            slot += 1;
        }
        f(slot, &mut self.head.weights, &self.head.grad_weights, "head.weights")?;
        slot += 1;
        f(slot, &mut self.head.bias, &self.head.grad_bias, "head.bias")?;
        Ok(())
    }

    /// All state tensors that belong in a checkpoint, in the fixed order:
    /// trainable parameters plus batch-norm running statistics.
    fn state_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (ci, column) in self.columns.iter_mut().enumerate() {
            for (li, layer) in column.layers.iter_mut().enumerate() {
                match layer {
                    ColumnLayer::Conv(conv) => {
                        out.push((format!("col{ci}.conv{li}.weights"), &mut conv.weights));
                        out.push((format!("col{ci}.conv{li}.bias"), &mut conv.bias));
                    }
                    ColumnLayer::Norm(norm) => {
                        out.push((format!("col{ci}.bn{li}.scale"), &mut norm.scale));
                        out.push((format!("col{ci}.bn{li}.shift"), &mut norm.shift));
                        out.push((format!("col{ci}.bn{li}.running_mean"), &mut norm.running_mean));
                        out.push((format!("col{ci}.bn{li}.running_var"), &mut norm.running_var));
                    }
                    ColumnLayer::Pool(_) | ColumnLayer::Act(_) => {}
                }
            }
            out.push((format!("col{ci}.fc.weights"), &mut column.fc.weights));
            out.push((format!("col{ci}.fc.bias"), &mut column.fc.bias));
        }
        out.push(("head.weights".to_string(), &mut self.head.weights));
        out.push(("head.bias".to_string(), &mut self.head.bias));
        out
    }

    /// Fraction of correctly classified samples, eval mode, processed in
    /// chunks of `batch_size`. Ties in the argmax go to the lowest class.
    pub fn evaluate_accuracy(
        &mut self,
        images: &Tensor,
        labels: &[usize],
        batch_size: usize,
    ) -> Result<f64> {
        let n = self.check_input(images)?;
        if n == 0 || labels.is_empty() {
            return Err(Error::usage("cannot evaluate accuracy on an empty split"));
        }
        if labels.len() != n {
            return Err(Error::usage(format!("{n} images but {} labels", labels.len())));
        }
        let sample = images.len() / n;
        let mut correct = 0usize;
        let mut start = 0usize;
        while start < n {
            let count = batch_size.min(n - start);
            let mut batch = Tensor::zeros(&[count, 1, self.arch.input_side, self.arch.input_side]);
            batch
                .data_mut()
                .copy_from_slice(&images.data()[start * sample..(start + count) * sample]);
            let logits = self.forward(&batch, Mode::Eval)?;
            let predicted = argmax_rows(&logits)?;
            correct += predicted
                .iter()
                .zip(&labels[start..start + count])
                .filter(|(p, l)| p == l)
                .count();
            start += count;
        }
        Ok(correct as f64 / n as f64)
    }

    /// Writes the model checkpoint: `KGA1` header (version, template hash,
    /// genome text) followed by every state tensor in traversal order.
    pub fn save_checkpoint(&mut self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&checkpoint::MAGIC)?;
        checkpoint::write_u32(&mut w, checkpoint::VERSION)?;
        checkpoint::write_u64(&mut w, self.template_hash)?;
        checkpoint::write_string(&mut w, &self.genome.to_string())?;
        let tensors = self.state_tensors_mut();
        checkpoint::write_u32(&mut w, tensors.len() as u32)?;
        for (_, t) in tensors {
            checkpoint::write_tensor(&mut w, t)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a checkpoint written by [`save_checkpoint`]: rebuilds the model
    /// from the stored genome under `template`, then overwrites all state.
    /// The template must hash to the stored value.
    pub fn load_checkpoint(
        path: &Path,
        template: &NetworkTemplate,
        dropout_rate: f64,
        dropout_rng: ChaCha8Rng,
    ) -> Result<MultiColumnModel> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != checkpoint::MAGIC {
            return Err(Error::data(format!(
                "{}: unexpected magic {magic:?} at offset 0",
                path.display()
            )));
        }
        let version = checkpoint::read_u32(&mut r)?;
        if version != checkpoint::VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {version}")));
        }
        let stored_hash = checkpoint::read_u64(&mut r)?;
        if stored_hash != template.hash() {
            return Err(Error::data(
                "checkpoint was written for a different network template".to_string(),
            ));
        }
        let genome: Genome = checkpoint::read_string(&mut r)?
            .parse()
            .map_err(|e: Error| Error::data(format!("checkpoint genome: {e}")))?;
        // Parameters are overwritten below, so the init seed is immaterial;
        // a fixed one keeps loading deterministic regardless.
        let mut init_rng = seeded_rng(0);
        let mut model = build_model(&genome, template, dropout_rate, &mut init_rng, dropout_rng)?;
        let count = checkpoint::read_u32(&mut r)? as usize;
        let tensors = model.state_tensors_mut();
        if count != tensors.len() {
            return Err(Error::data(format!(
                "checkpoint holds {count} tensors, model needs {}",
                tensors.len()
            )));
        }
        for (name, t) in tensors {
            let loaded = checkpoint::read_tensor(&mut r)?;
            if loaded.shape() != t.shape() {
                return Err(Error::data(format!(
                    "checkpoint tensor {name} has shape {:?}, expected {:?}",
                    loaded.shape(),
                    t.shape()
                )));
            }
            *t = loaded;
        }
        Ok(model)
    }

    /// Number of trainable parameters.
    pub fn parameter_count(&mut self) -> usize {
        let mut total = 0;
        self.for_each_parameter(|_, p, _, _| {
            total += p.len();
            Ok(())
        })
        .expect("counting cannot fail");
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::{cross_entropy_with_grad, one_hot, softmax};
    use crate::testsupport::{max_relative_error, numeric_gradient, patterned, FD_STEP};

    /// Template small enough for end-to-end finite differences.
    fn tiny_fd_template() -> NetworkTemplate {
        NetworkTemplate {
            columns: 3,
            conv_layers_per_column: 3,
            channel_plan: vec![2, 2, 2],
            fc_width: 8,
            input_side: 8,
            num_classes: 3,
        }
    }

    fn feasible_fd_genome() -> Genome {
        // Mixed kernels; every column stays feasible on an 8x8 input.
        Genome::new(vec![3, 7, 7, 7, 3, 7, 7, 7, 3]).unwrap()
    }

    fn build_tiny(dropout: f64, seed: u64) -> MultiColumnModel {
        let mut init = seeded_rng(seed);
        build_model(&feasible_fd_genome(), &tiny_fd_template(), dropout, &mut init, seeded_rng(99))
            .unwrap()
    }

    #[test]
    fn head_width_is_columns_times_fc_width() {
        let template = NetworkTemplate::full_default(10);
        let genome = Genome::homogeneous(3, template.genome_len()).unwrap();
        let mut init = seeded_rng(1);
        let model = build_model(&genome, &template, 0.5, &mut init, seeded_rng(2)).unwrap();
        assert_eq!(model.head.in_width, 3 * 2048);
        assert_eq!(model.head.out_width, 10);

        let single = NetworkTemplate { columns: 1, ..NetworkTemplate::full_default(10) };
        let genome = Genome::homogeneous(3, single.genome_len()).unwrap();
        let model = build_model(&genome, &single, 0.5, &mut seeded_rng(1), seeded_rng(2)).unwrap();
        assert_eq!(model.head.in_width, 2048);
    }

    #[test]
    fn equal_seeds_build_bit_identical_models() {
        let mut a = build_tiny(0.5, 7);
        let mut b = build_tiny(0.5, 7);
        let at = a.state_tensors_mut();
        let bt = b.state_tensors_mut();
        assert_eq!(at.len(), bt.len());
        for ((an, av), (bn, bv)) in at.iter().zip(bt.iter()) {
            assert_eq!(an, bn);
            assert_eq!(av.data(), bv.data(), "tensor {an} differs");
        }
    }

    #[test]
    fn forward_produces_finite_logits_of_the_right_shape() {
        let mut model = build_tiny(0.5, 3);
        let input = patterned(&[1, 1, 8, 8]);
        let logits = model.forward(&input, Mode::Eval).unwrap();
        assert_eq!(logits.shape(), &[1, 3]);
        assert!(logits.is_finite());
    }

    #[test]
    fn duplicated_rows_get_identical_logits_in_eval_mode() {
        let mut model = build_tiny(0.5, 4);
        let one = patterned(&[1, 1, 8, 8]);
        let mut batch = Tensor::zeros(&[3, 1, 8, 8]);
        for bi in 0..3 {
            batch.data_mut()[bi * 64..(bi + 1) * 64].copy_from_slice(one.data());
        }
        let logits = model.forward(&batch, Mode::Eval).unwrap();
        let row0 = logits.data()[0..3].to_vec();
        for bi in 1..3 {
            assert_eq!(&logits.data()[bi * 3..(bi + 1) * 3], row0.as_slice());
        }
    }

    #[test]
    fn softmax_of_head_logits_sums_to_one() {
        let mut model = build_tiny(0.5, 5);
        let input = patterned(&[2, 1, 8, 8]);
        let logits = model.forward(&input, Mode::Eval).unwrap();
        let probs = softmax(&logits).unwrap();
        for bi in 0..2 {
            let sum: f64 = probs.data()[bi * 3..(bi + 1) * 3].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_columns_and_head_blocks_leaves_logits_unchanged() {
        let mut model = build_tiny(0.5, 6);
        let input = patterned(&[2, 1, 8, 8]);
        let baseline = model.forward(&input, Mode::Eval).unwrap();

        // Rotate the built columns and the matching head-weight blocks.
        let mut permuted = model.clone();
        permuted.columns.rotate_left(1);
        let fcw = 8;
        let concat = permuted.head.in_width;
        let mut weights = permuted.head.weights.clone();
        for row in 0..permuted.head.out_width {
            for (dst_block, src_block) in [(0, 1), (1, 2), (2, 0)] {
                let src = &model.head.weights.data()
                    [row * concat + src_block * fcw..row * concat + (src_block + 1) * fcw];
                weights.data_mut()[row * concat + dst_block * fcw..row * concat + (dst_block + 1) * fcw]
                    .copy_from_slice(src);
            }
        }
        permuted.head.weights = weights;
        let rotated = permuted.forward(&input, Mode::Eval).unwrap();
        assert!(baseline.max_abs_diff(&rotated) < 1e-12);
    }

    #[test]
    fn untrained_model_scores_at_chance_on_random_labels() {
        let mut model = build_tiny(0.5, 8);
        let n = 1000;
        let images = patterned(&[n, 1, 8, 8]);
        // Deterministic pseudo-random 3-class labels.
        let labels: Vec<usize> = (0..n).map(|i| (i * 2654435761) % 3).collect();
        let accuracy = model.evaluate_accuracy(&images, &labels, 100).unwrap();
        // Chance for 3 classes is 1/3; a binomial 3σ band at n=1000 is ±0.045.
        assert!((accuracy - 1.0 / 3.0).abs() < 0.05, "accuracy {accuracy}");
    }

    #[test]
    fn accuracy_is_invariant_to_dataset_order() {
        let mut model = build_tiny(0.5, 9);
        let n = 60;
        let images = patterned(&[n, 1, 8, 8]);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let forward_order = model.evaluate_accuracy(&images, &labels, 16).unwrap();

        let sample = 64;
        let mut reversed = Tensor::zeros(&[n, 1, 8, 8]);
        let mut reversed_labels: Vec<usize> = labels.clone();
        reversed_labels.reverse();
        for i in 0..n {
            let j = n - 1 - i;
            reversed.data_mut()[i * sample..(i + 1) * sample]
                .copy_from_slice(&images.data()[j * sample..(j + 1) * sample]);
        }
        let reverse_order = model.evaluate_accuracy(&reversed, &reversed_labels, 16).unwrap();
        assert_eq!(forward_order, reverse_order);
    }

    #[test]
    fn empty_split_is_a_usage_error() {
        let mut model = build_tiny(0.5, 10);
        let images = Tensor::zeros(&[0, 1, 8, 8]);
        assert!(model.evaluate_accuracy(&images, &[], 16).is_err());
    }

    #[test]
    fn constant_prediction_on_matching_labels_scores_one() {
        let mut model = build_tiny(0.5, 11);
        // Identical images → identical predictions; label them all with the
        // model's own prediction.
        let one = patterned(&[1, 1, 8, 8]);
        let n = 12;
        let mut images = Tensor::zeros(&[n, 1, 8, 8]);
        for bi in 0..n {
            images.data_mut()[bi * 64..(bi + 1) * 64].copy_from_slice(one.data());
        }
        let logits = model.forward(&one, Mode::Eval).unwrap();
        let predicted = argmax_rows(&logits).unwrap()[0];
        let labels = vec![predicted; n];
        assert_eq!(model.evaluate_accuracy(&images, &labels, 5).unwrap(), 1.0);
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        // Dropout rate 0 keeps the loss deterministic for the probes; BN runs
        // in train mode so the full batch-statistics path is differentiated.
        let model = build_tiny(0.0, 12);
        let input = patterned(&[2, 1, 8, 8]);
        let targets = one_hot(&[0, 2], 3).unwrap();

        let mut live = model.clone();
        let logits = live.forward(&input, Mode::Train).unwrap();
        let (_, grad_logits) = cross_entropy_with_grad(&logits, &targets).unwrap();
        live.backward(&grad_logits).unwrap();

        let loss_with = |probe: &Tensor, slot_target: usize| -> f64 {
            let mut m = model.clone();
            m.for_each_parameter(|slot, p, _, _| {
                if slot == slot_target {
                    *p = probe.clone();
                }
                Ok(())
            })
            .unwrap();
            let logits = m.forward(&input, Mode::Train).unwrap();
            let (loss, _) = cross_entropy_with_grad(&logits, &targets).unwrap();
            loss
        };

        // Check a representative subset of parameter tensors end to end: the
        // first conv, a batch-norm, a column FC, and the head.
        let mut checked = 0;
        let mut worst: (f64, String) = (0.0, String::new());
        let mut snapshot: Vec<(usize, Tensor, Tensor, String)> = Vec::new();
        let mut probe_model = model.clone();
        probe_model
            .for_each_parameter(|slot, p, _, name| {
                snapshot.push((slot, p.clone(), Tensor::zeros(p.shape()), name.to_string()));
                Ok(())
            })
            .unwrap();
        let mut analytic: Vec<(usize, Tensor, String)> = Vec::new();
        live.for_each_parameter(|slot, _, g, name| {
            analytic.push((slot, g.clone(), name.to_string()));
            Ok(())
        })
        .unwrap();
        for (slot, value, _, name) in &snapshot {
            let interesting = name == "col0.conv0.weights"
                || name == "col0.bn2.scale"
                || name == "col1.fc.weights"
                || name == "head.weights"
                || name == "col2.conv4.bias"
                || name == "col1.bn5.shift";
            if !interesting {
                continue;
            }
            let numeric = numeric_gradient(|probe| loss_with(probe, *slot), value, FD_STEP);
            let (_, grad, _) = analytic.iter().find(|(s, _, _)| s == slot).unwrap().clone();
            let err = max_relative_error(&grad, &numeric, 1e-5);
            if err > worst.0 {
                worst = (err, name.clone());
            }
            checked += 1;
        }
        assert_eq!(checked, 6, "parameter names drifted; update the test");
        assert!(worst.0 < 1e-4, "worst end-to-end rel err {} at {}", worst.0, worst.1);
    }

    #[test]
    fn checkpoints_round_trip_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.kga1");
        let mut model = build_tiny(0.5, 13);
        // Give the BN running stats non-default values so they are covered.
        let input = patterned(&[4, 1, 8, 8]);
        model.forward(&input, Mode::Train).unwrap();
        model.save_checkpoint(&path).unwrap();

        let mut restored =
            MultiColumnModel::load_checkpoint(&path, &tiny_fd_template(), 0.5, seeded_rng(99))
                .unwrap();
        assert_eq!(restored.genome, model.genome);
        let a = model.state_tensors_mut();
        let b = restored.state_tensors_mut();
        for ((an, av), (_, bv)) in a.iter().zip(b.iter()) {
            assert_eq!(av.data(), bv.data(), "tensor {an} differs after reload");
        }
    }

    #[test]
    fn eval_outputs_survive_a_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.kga1");
        let mut model = build_tiny(0.5, 14);
        let input = patterned(&[2, 1, 8, 8]);
        model.forward(&patterned(&[4, 1, 8, 8]), Mode::Train).unwrap();
        let before = model.forward(&input, Mode::Eval).unwrap();
        model.save_checkpoint(&path).unwrap();
        let mut restored =
            MultiColumnModel::load_checkpoint(&path, &tiny_fd_template(), 0.5, seeded_rng(99))
                .unwrap();
        let after = restored.forward(&input, Mode::Eval).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn checkpoint_rejects_wrong_magic_and_wrong_template() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.kga1");
        let mut model = build_tiny(0.5, 15);
        model.save_checkpoint(&path).unwrap();

        // Corrupt the magic.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad = dir.path().join("bad.kga1");
        std::fs::write(&bad, &bytes).unwrap();
        let err =
            MultiColumnModel::load_checkpoint(&bad, &tiny_fd_template(), 0.5, seeded_rng(0))
                .unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        // Same file, different template.
        let other = NetworkTemplate { fc_width: 16, ..tiny_fd_template() };
        let err = MultiColumnModel::load_checkpoint(&path, &other, 0.5, seeded_rng(0)).unwrap_err();
        assert!(err.to_string().contains("template"), "{err}");
    }

    #[test]
    fn infer_shapes_matches_observed_shapes_for_random_genomes() {
        // The decoded ArchitectureSpec predicts every layer's output; a dummy
        // forward pass must observe exactly those shapes. 100 random genomes
        // on the FD template (side 8 keeps it fast; infeasible draws skipped).
        let template = tiny_fd_template();
        let mut rng = seeded_rng(16);
        let mut tested = 0;
        let mut draws = 0;
        while tested < 100 {
            draws += 1;
            assert!(draws < 10_000, "feasible genomes too rare");
            let genome = crate::genome::random_genome(&template, &mut rng).unwrap();
            let arch = match decode(&genome, &template) {
                Ok(arch) => arch,
                Err(_) => continue, // infeasible on side 8; skip
            };
            let mut init = seeded_rng(17);
            let mut model =
                build_model(&genome, &template, 0.0, &mut init, seeded_rng(18)).unwrap();
            let input = Tensor::zeros(&[2, 1, 8, 8]);
            let (_, trace) = model.forward_with_trace(&input, Mode::Eval).unwrap();
            for (ci, li, shape) in trace {
                let (channels, side) = arch.columns[ci].layers[li].out_shape();
                assert_eq!(
                    shape,
                    vec![2, channels, side, side],
                    "genome {genome} column {ci} layer {li}"
                );
            }
            tested += 1;
        }
    }
}

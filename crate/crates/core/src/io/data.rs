// SPDX-License-Identifier: Apache-2.0

//! Task streams from synthetic generators or IDX image files.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{DatasetSpec, StreamSpec};
use super::idx::read_idx;
use crate::augment::{ImageShape, Sample};
use crate::continual::{Protocol, Task, TaskStream};
use crate::error::{Error, Result};

fn normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Class centres on the sphere of radius `separation`.
fn class_means<R: Rng + ?Sized>(
    classes: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|_| {
            let mut z = normal_vec(dim, rng);
            let norm = z
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            z.iter_mut().for_each(|v| *v *= separation / norm);
            z
        })
        .collect()
}

struct Ids(u64);

impl Ids {
    fn next(&mut self) -> u64 {
        self.0 += 1;
        self.0 - 1
    }
}

/// Splits classes `0..tasks·cpt` into consecutive groups, drawing samples per class.
fn class_split<R: Rng + ?Sized>(
    stream: &StreamSpec,
    train_per_class: usize,
    test_per_class: usize,
    rng: &mut R,
    mut draw: impl FnMut(usize, &mut R) -> Vec<f64>,
) -> Result<TaskStream> {
    let cpt = stream.classes_per_task;
    let mut ids = Ids(0);
    let mut tasks = Vec::with_capacity(stream.tasks);
    for t in 0..stream.tasks {
        let classes: Vec<usize> = (t * cpt..(t + 1) * cpt).collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &c in &classes {
            for _ in 0..train_per_class {
                train.push(Sample::vector(draw(c, rng), c, t, ids.next()));
            }
            for _ in 0..test_per_class {
                test.push(Sample::vector(draw(c, rng), c, t, ids.next()));
            }
        }
        tasks.push(Task {
            train,
            test,
            classes,
        });
    }
    TaskStream::new(stream.protocol, tasks, stream.tasks * cpt, None)
}

/// Builds the task stream described by `spec` and `stream`, drawing any random
/// quantities from `rng`.
pub fn generate_dataset<R: Rng + ?Sized>(
    spec: &DatasetSpec,
    stream: &StreamSpec,
    rng: &mut R,
) -> Result<TaskStream> {
    spec.validate()?;
    match spec {
        &DatasetSpec::SplitGaussians {
            classes,
            dim,
            train_per_class,
            test_per_class,
            separation,
            noise,
        } => {
            let means = class_means(classes, dim, separation, rng);
            class_split(stream, train_per_class, test_per_class, rng, |c, r| {
                means[c]
                    .iter()
                    .map(|m| m + noise * r.sample::<f64, _>(StandardNormal))
                    .collect()
            })
        }
        &DatasetSpec::SplitRings {
            dim,
            train_per_class,
            test_per_class,
            ring_gap,
            noise,
            ..
        } => class_split(stream, train_per_class, test_per_class, rng, |c, r| {
            let radius = (c + 1) as f64 * ring_gap;
            let theta = r.random::<f64>() * std::f64::consts::TAU;
            let mut x = normal_vec(dim, r);
            x.iter_mut().for_each(|v| *v *= noise);
            x[0] += radius * theta.cos();
            x[1] += radius * theta.sin();
            x
        }),
        &DatasetSpec::PermutedDomains {
            classes,
            dim,
            train_per_class,
            test_per_class,
            separation,
            noise,
            identity,
        } => {
            let means = class_means(classes, dim, separation, rng);
            let mut ids = Ids(0);
            let mut tasks = Vec::with_capacity(stream.tasks);
            for t in 0..stream.tasks {
                let mut perm: Vec<usize> = (0..dim).collect();
                if !identity {
                    perm.shuffle(rng);
                }
                let draw = |c: usize, r: &mut R| -> Vec<f64> {
                    let x: Vec<f64> = means[c]
                        .iter()
                        .map(|m| m + noise * r.sample::<f64, _>(StandardNormal))
                        .collect();
                    perm.iter().map(|&p| x[p]).collect()
                };
                let mut train = Vec::new();
                let mut test = Vec::new();
                for c in 0..classes {
                    for _ in 0..train_per_class {
                        train.push(Sample::vector(draw(c, rng), c, t, ids.next()));
                    }
                    for _ in 0..test_per_class {
                        test.push(Sample::vector(draw(c, rng), c, t, ids.next()));
                    }
                }
                tasks.push(Task {
                    train,
                    test,
                    classes: (0..classes).collect(),
                });
            }
            TaskStream::new(Protocol::Dil, tasks, classes, None)
        }
        DatasetSpec::IdxImages {
            train_images,
            train_labels,
            test_images,
            test_labels,
            limit_per_class,
        } => {
            let train = load_idx_pair(train_images, train_labels, *limit_per_class)?;
            let test = load_idx_pair(test_images, test_labels, *limit_per_class)?;
            if train.shape != test.shape {
                return Err(Error::Data("train and test images differ in size".into()));
            }
            split_images(stream, train, test)
        }
    }
}

/// Images grouped by label, pixels scaled to [0, 1].
pub struct LabelledImages {
    pub shape: ImageShape,
    pub by_class: BTreeMap<usize, Vec<Vec<f64>>>,
}

pub fn load_idx_pair(
    images: &std::path::Path,
    labels: &std::path::Path,
    limit_per_class: usize,
) -> Result<LabelledImages> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.len() != 3 {
        return Err(Error::Data(format!(
            "{}: expected a 3-d image array, got {} dimensions",
            images.display(),
            img.dims.len()
        )));
    }
    if lab.dims.len() != 1 || lab.items() != img.items() {
        return Err(Error::Data(format!(
            "{} holds {} labels for {} images",
            labels.display(),
            lab.data.len(),
            img.items()
        )));
    }
    let shape = ImageShape {
        height: img.dims[1],
        width: img.dims[2],
    };
    let mut by_class: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (i, &y) in lab.data.iter().enumerate() {
        let list = by_class.entry(y as usize).or_default();
        if limit_per_class == 0 || list.len() < limit_per_class {
            list.push(img.item(i).iter().map(|&p| p as f64 / 255.0).collect());
        }
    }
    Ok(LabelledImages { shape, by_class })
}

fn split_images(
    stream: &StreamSpec,
    train: LabelledImages,
    test: LabelledImages,
) -> Result<TaskStream> {
    if stream.protocol == Protocol::Dil {
        return Err(Error::Config(
            "idx-images produces class-split streams".into(),
        ));
    }
    let classes: Vec<usize> = train.by_class.keys().copied().collect();
    let cpt = stream.classes_per_task;
    if stream.tasks * cpt > classes.len() {
        return Err(Error::Data(format!(
            "{} tasks of {cpt} classes need {} classes, the files hold {}",
            stream.tasks,
            stream.tasks * cpt,
            classes.len()
        )));
    }
    // Labels are remapped to 0.. in ascending order of the file's label values.
    let mut ids = Ids(0);
    let mut tasks = Vec::with_capacity(stream.tasks);
    for t in 0..stream.tasks {
        let mut task = Task {
            train: Vec::new(),
            test: Vec::new(),
            classes: (t * cpt..(t + 1) * cpt).collect(),
        };
        for new in t * cpt..(t + 1) * cpt {
            let raw = classes[new];
            for px in &train.by_class[&raw] {
                task.train
                    .push(Sample::image(px.clone(), train.shape, new, t, ids.next())?);
            }
            for px in test.by_class.get(&raw).into_iter().flatten() {
                task.test
                    .push(Sample::image(px.clone(), test.shape, new, t, ids.next())?);
            }
        }
        tasks.push(task);
    }
    TaskStream::new(
        stream.protocol,
        tasks,
        stream.tasks * cpt,
        Some(train.shape),
    )
}

//! End-to-end assembly: potential, grid, decomposition, chain, coupling and
//! joint generator.

use crate::chain::{synth_generator, ChainSpec, InitialLaw, Scaling, Shape};
use crate::coupling::{build_coupling, build_joint_generator, CouplingModel};
use crate::potential::{domains_of_attraction, validate_assumptions, DomainPartition, Potential};
use crate::sparse::SparseGenerator;
use crate::spectral::{build_generator, decompose, DiscreteGenerator, Grid, SpectralDecomposition};
use crate::{Error, Result};

/// Chain choice for [`Pipeline::build`].
#[derive(Debug, Clone, PartialEq)]
pub enum ChainChoice {
    Synthesized(Shape),
    /// Birth-death chain whose stationary law is the grid mass of each
    /// domain of attraction.
    WellMasses,
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub chain: ChainChoice,
    pub kappa: f64,
    pub scaling: Scaling,
    pub initial: InitialLaw,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            chain: ChainChoice::Synthesized(Shape::TwoState { theta: 0.5 }),
            kappa: 0.9,
            scaling: Scaling::Budget,
            initial: InitialLaw::Uniform,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub potential: Potential,
    pub eps: f64,
    pub grid: Grid,
    pub partition: DomainPartition,
    pub generator: DiscreteGenerator,
    pub decomposition: SpectralDecomposition,
    pub spec: ChainSpec,
    pub model: CouplingModel,
}

/// Grid mass `sum w_l` over each domain of attraction.
pub fn well_masses(gen: &DiscreteGenerator, partition: &DomainPartition) -> Vec<f64> {
    let mut mass = vec![0.0; partition.len()];
    for (x, w) in gen.nodes.iter().zip(&gen.weights) {
        if let Some(d) = partition.domain_of(*x) {
            mass[d] += w;
        }
    }
    mass
}

impl Pipeline {
    pub fn build(potential: Potential, eps: f64, grid: Grid, opts: &PipelineOptions) -> Result<Self> {
        let m = potential.m();
        if m == 0 {
            return Err(Error::AssumptionViolated("coupling needs at least two minima".into()));
        }
        validate_assumptions(&potential).require()?;
        let partition = domains_of_attraction(&potential);
        let generator = build_generator(&potential, eps, &grid)?;
        let decomposition = decompose(&generator, m)?;
        let lambdas = &decomposition.eigenvalues[1..];
        let q = match &opts.chain {
            ChainChoice::Synthesized(shape) => synth_generator(lambdas, shape)?,
            ChainChoice::WellMasses => {
                let stationary = Some(well_masses(&generator, &partition));
                synth_generator(lambdas, &Shape::BirthDeath { stationary })?
            }
            ChainChoice::Explicit(q) => q.clone(),
        };
        let spec = ChainSpec::build(q, &decomposition, opts.kappa, opts.scaling, &opts.initial)?;
        let model = build_coupling(&decomposition, &spec)?;
        Ok(Self { potential, eps, grid, partition, generator, decomposition, spec, model })
    }

    /// Preset potential on an automatic grid with `n` nodes.
    pub fn preset(name: &str, eps: f64, n: usize, opts: &PipelineOptions) -> Result<Self> {
        let potential = Potential::preset(name)?;
        let grid = Grid::auto(&potential, eps, n)?;
        Self::build(potential, eps, grid, opts)
    }

    pub fn joint_generator(&self) -> Result<SparseGenerator> {
        build_joint_generator(&self.model, &self.generator)
    }
}

"""
Feeder topology, device models and scenario profiles.
"""
from voltgrid.feeder.feeder_model import (
    FeederModel,
    InverterBound,
    feeder_from_dict,
    feeder_to_dict,
    inverter_bound,
    kvar_to_pu,
    kw_to_pu,
    load_feeder,
    pu_to_kvar,
    pu_to_kw,
    save_feeder,
)
from voltgrid.feeder.profiles import (
    MarkovChainSpec,
    ScenarioProfile,
    default_chain_spec,
    load_chain_spec,
    load_profiles,
    save_profiles,
    synth_markov_profile,
)
from voltgrid.feeder.bundled import bundled_feeder

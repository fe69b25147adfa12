"""Diverse decoding strategies for conditional sequence models."""
from ._kernels import BACKEND
from .beam import (BeamConfig, beam_search, clustered_select, hamming_penalty,
                   iterative_beam_search, top_g_cap_select)
from .cluster import (ClusterResult, HashedEmbeddings, WordVectors, embed_sequence, kmeans,
                      load_precomputed_embeddings, load_word_vectors, pdc_filter, rank_filter,
                      sequence_embedder)
from .errors import (BudgetExceededError, CapabilityError, ConstructionError, DecodeError,
                     ParseError, UndefinedMetricError, ValidationError)
from .hypothesis import CandidateSet, ScoredHypothesis
from .metrics import MetricsReport, dist_k, ent_k, set_perplexity
from .model import (NgramModel, TableModel, Vocabulary, build_ngram_model, load_table_model,
                    perturbed_step, score_sequence, step)
from .samplers import (SamplerConfig, greedy_decode, sample_candidates, softmax_with_temperature,
                       top_s_filter)

__version__ = "0.1.0"

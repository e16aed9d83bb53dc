from tuckerlm.models import ModelSpec, TensorRole


def tiny_spec(n_layers: int, n_tensors: int, rank: int = 3, name: str = "tiny") -> ModelSpec:
    """A synthetic spec whose every role has min dimension ``rank``."""
    roles = tuple(TensorRole(f"R{k}", (rank, rank + k)) for k in range(n_tensors))
    return ModelSpec(name, "toy", n_layers, 4, 1, 4, 8, roles, (), 10)

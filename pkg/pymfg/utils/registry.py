# Registry pattern after fvcore.common.registry


class Registry():
    """Name -> class table behind the ``type`` key of option files.

    Games, population samplers, N-player strategies and metrics register
    themselves at import time; ``create_game``, ``build_sampler``,
    ``build_strategy`` and ``calculate_metric`` look them up by name.

    .. code-block:: python

        @STRATEGY_REGISTRY.register()
        class ZeroStrategy(BaseStrategy):
            ...

        STRATEGY_REGISTRY.get('ZeroStrategy')
    """

    def __init__(self, name):
        self._name = name
        self._obj_map = {}

    def _do_register(self, name, obj):
        if name in self._obj_map:
            raise KeyError(f"'{name}' is already registered as a {self._name}")
        self._obj_map[name] = obj

    def register(self, obj=None):
        """Register ``obj`` under its ``__name__``; without ``obj`` returns a decorator."""
        if obj is None:

            def deco(cls):
                self._do_register(cls.__name__, cls)
                return cls

            return deco

        self._do_register(obj.__name__, obj)
        return obj

    def get(self, name):
        ret = self._obj_map.get(name)
        if ret is None:
            raise KeyError(f"Unknown {self._name} '{name}', available: {sorted(self._obj_map)}")
        return ret

    def __contains__(self, name):
        return name in self._obj_map

    def __iter__(self):
        return iter(self._obj_map.items())

    def keys(self):
        return self._obj_map.keys()


MODEL_REGISTRY = Registry('model')
SAMPLER_REGISTRY = Registry('sampler')
STRATEGY_REGISTRY = Registry('strategy')
METRIC_REGISTRY = Registry('metric')

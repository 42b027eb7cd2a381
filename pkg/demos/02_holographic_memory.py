"""Store pairs in one vector, pull them back out, clean up the noise."""
import numpy as np

from aflstm.hrr import CleanupMemory, capacity_experiment, decode, encode, random_unit_vectors

rng = np.random.default_rng(1)
d = 512

# ONE PAIR

key, value = random_unit_vectors(rng, 2, d)
trace = encode(key, value)                 # bind
noisy = decode(key, trace)                 # unbind: value plus noise
cos = noisy @ value / np.linalg.norm(noisy)
print(f"cosine(decoded, stored) = {cos:.3f}")   # about 0.7: recognisable, not exact

# CLEANUP
# the noisy vector is resolved against a store of known items

items = random_unit_vectors(rng, 10, d)
mem = CleanupMemory(d)
for i, v in enumerate(items):
    mem.add(f"item{i}", v)

print("retrieved:", mem.cleanup(decode(key, encode(key, items[3]))))

# SUPERPOSITION
# several bound pairs summed into one trace; capacity grows with d

print("pairs " + " ".join(f"d={n:<5d}" for n in (64, 256, 1024)))
for pairs in (1, 5, 20, 50):
    accs = [capacity_experiment(n, pairs, trials=20, seed=0) for n in (64, 256, 1024)]
    print(f"{pairs:5d} " + " ".join(f"{a:7.3f}" for a in accs))

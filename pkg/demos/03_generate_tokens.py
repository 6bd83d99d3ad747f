"""Generate tokens with a convolution and with its distilled recurrence.

Convolution-based generation has to revisit the whole history at every
step. The recurrence carries a fixed-size state instead. Both produce the
same outputs when the recurrence reproduces the filter exactly, and the
operation counters show the cost difference.
"""

import numpy as np

from ssmdistill import complexity_report, generate_conv, generate_recurrent, impulse_response, synth_bank

rng = np.random.default_rng(0)
T, K = 128, 256
_, truth = synth_bank("planted-ssm", 1, T + K + 1, order=8, seed=2)
ssm = truth[0]
filt = impulse_response(ssm, T + K + 1)
prompt = rng.standard_normal(T)
drive = rng.standard_normal(K)

y_conv, s_conv = generate_conv(filt, prompt, K, feedback=drive, return_session=True)
y_rec, s_rec = generate_recurrent(ssm, prompt, K, feedback=drive, return_session=True)
y_fft = generate_recurrent(ssm, prompt, K, feedback=drive, prefill="fft")

print(f"max |conv - recurrent|          {np.max(np.abs(y_conv - y_rec)):.2e}")
print(f"max |recurrent step - fft fill| {np.max(np.abs(y_rec - y_fft)):.2e}")
for name, session in (("convolution", s_conv), ("recurrent", s_rec)):
    rep = complexity_report(session)
    print(f"\n{name}")
    print(f"  MACs on first / last step  {rep['mul_adds_per_step_first']} / {rep['mul_adds_per_step_last']}")
    print(f"  total MACs                 {rep['mul_adds_total']}")
    print(f"  peak stored values         {rep['peak_values']}")

import hypothesis

# derandomized so the suite is deterministic run to run
hypothesis.settings.register_profile(
    "ci", hypothesis.settings(derandomize=True, deadline=None, max_examples=50))
hypothesis.settings.load_profile("ci")

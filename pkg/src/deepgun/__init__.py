"""Deep generative endmember models for spectral unmixing."""

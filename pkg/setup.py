from setuptools import setup, find_packages

setup(
    name = "rnn-lyapunov-utils",
    version = "0.1.0",
    packages = find_packages(exclude=['tests', 'tests.*']),
    install_requires = ['numpy', 'scipy', 'h5py'],
    extras_require = {'test': ['pytest']},
    scripts = ['apps/lyapunovSpectrum.py'],
    )

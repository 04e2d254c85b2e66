from setuptools import setup
import sys

sys.path.extend('.')
from vortexflux import __version__

test_require = ['flake8', 'black', 'pytest']

with open('requirements.txt') as f:
    reqs = [l.strip() for l in f if l.strip() and not any(l.startswith(t) for t in test_require)]

with open('README.rst') as f:
    readme_contents = f.read()

setup(
    name='vortexflux',
    description='Vortex density transport coupled to the average magnetic field in type-II superconductors',
    long_description=readme_contents,
    version=__version__,
    install_requires=reqs,
    test_requires=test_require,
    packages=['vortexflux'],
    py_modules=['vflux'],
    entry_points={
        'console_scripts': [
            'vflux = vflux:main'
        ]
    },
    python_requires='>=3.8',
    author='vortexflux developers',
    license='BSD 3-clause',
    keywords=['superconductivity', 'vortex density', 'finite differences', 'vanishing viscosity', 'cli'],
    classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Natural Language :: English',
        'Operating System :: MacOS :: MacOS X',
        'Operating System :: POSIX :: Linux',
        'Programming Language :: Python :: 3 :: Only',
        'Topic :: Scientific/Engineering :: Physics'
    ]
)

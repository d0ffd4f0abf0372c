class Environment {
  import(config) {
    const item=JSON.parse(config)
    let restoreData=item
    if (item.name && item.fn && item.schema) {
      restoreData={
        [item.name]: item,
      }
    }
    Object.keys(restoreData).forEach((key)=>{
      const {name, schema, fn: source}=restoreData[key]
      const fn=restore(source, schema, this.options)
      this.resolved[name]={
        name,
        schema,
        fn,
      }
    })
  }

  constructor(options={}) {
    this.options=options
    this.resolved={}
  }

  addSchema(name, schema) {
    const fn=compile(schema)
    this.resolved[name]={name, schema, fn}
    return this
  }

  validate(name, object) {
    return this.resolved[name].fn(object)
  }

  export(name) {
    const names=name ? [name] : Object.keys(this.resolved)
    const data={}
    names.forEach((key)=>{
      data[key]={name: key, schema: this.resolved[key].schema, fn: this.resolved[key].fn.toJSON()}
    })
    return JSON.stringify(data)
  }
}

function compile(schema) {
  const required=JSON.stringify(schema.required || [])
  const body='return ' + required + '.every(function (k) { return k in data })'
  return restore('return function (data) { ' + body + ' }', schema)
}

function restore(source, schema, {inner}={}) {
  const tpl=new Function("schema", source)(schema)
  if (!inner) {
    tpl.toJSON=()=>source
  }
  return tpl
}

function djv(options) {
  return new Environment(options)
}

module.exports=djv
module.exports.Environment=Environment
